//! Conditional-GRU decoder: a first GRU over the previous target word, an
//! attention read over the source annotations, and a second GRU that also
//! receives the projected latent `h'_e`.

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::params::{ParamSet, ParamSpec};
use crate::tensor::Tensor;
use crate::text_encoder::{self, EncoderOutput};

pub const TARGET_EMBEDDING: &str = "tgt_emb";
const GRU1: &str = "dec.gru1";

/// Behavior switches for the second GRU.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DecoderOptions {
    /// Use `(1 - o_j)` as the candidate weight in the second GRU instead of
    /// the `(1 - o'_j)` from the first GRU.
    pub gate_fix: bool,
}

/// Weight declarations for the decoder. `latent_blocks` lists the
/// components of `h'_e` that feed the second GRU (empty for the baseline).
pub fn decoder_specs(
    d_h: usize,
    d_emb: usize,
    vocab: usize,
    latent_blocks: &[(&'static str, usize)],
) -> Vec<ParamSpec> {
    let mut specs = vec![ParamSpec::weight("dec.W_init", &[d_h, d_h])];
    specs.extend(text_encoder::gru_specs(GRU1, d_emb, d_h));
    specs.push(ParamSpec::weight("dec.att.W_catt", &[d_h, d_h]));
    specs.push(ParamSpec::weight("dec.att.W_att", &[d_h, d_h]));
    specs.push(ParamSpec::weight("dec.att.U_att", &[d_h]));
    for w in ["W", "W_r", "W_o", "U", "U_r", "U_o"] {
        specs.push(ParamSpec::weight(format!("dec.gru2.{w}"), &[d_h, d_h]));
    }
    for (block, width) in latent_blocks {
        for v in ["V", "V_r", "V_o"] {
            specs.push(ParamSpec::weight(format!("dec.gru2.{v}.{block}"), &[d_h, *width]));
        }
    }
    specs.push(ParamSpec::weight("dec.out.L_s", &[d_emb, d_h]));
    specs.push(ParamSpec::weight("dec.out.L_x", &[d_emb, d_h]));
    specs.push(ParamSpec::weight("dec.out.L_u", &[vocab, d_emb]));
    specs
}

/// Source annotations prepared for attention.
#[derive(Clone, Copy, Debug)]
pub struct SourceContext {
    /// `T_f x d_h` annotations `h_i`.
    pub states: NodeId,
    /// Pooled source representation `h_f`.
    pub pooled: NodeId,
    /// `W_catt h_i` for every position, `T_f x d_h`.
    pub keys: NodeId,
    /// Additive score mask: 0 for real positions, -inf for padding.
    pub mask: Option<NodeId>,
}

impl SourceContext {
    pub fn new(g: &mut Graph, ps: &ParamSet, enc: EncoderOutput) -> Result<Self> {
        let w = ps.node(g, "dec.att.W_catt")?;
        let wt = g.transpose(w)?;
        let keys = g.matmul(enc.states, wt)?;
        Ok(Self {
            states: enc.states,
            pooled: enc.pooled,
            keys,
            mask: None,
        })
    }

    /// Marks positions `>= valid` as padding.
    pub fn with_padding(mut self, g: &mut Graph, valid: usize) -> Result<Self> {
        let t = g.shape(self.states)[0];
        if valid == 0 || valid > t {
            return Err(Error::Contract(format!("{valid} valid positions out of {t}")));
        }
        let mask = (0..t).map(|i| if i < valid { 0.0 } else { f64::NEG_INFINITY }).collect();
        self.mask = Some(g.constant(Tensor::vector(mask)));
        Ok(self)
    }

    pub fn len(&self, g: &Graph) -> usize {
        g.shape(self.states)[0]
    }
}

/// `V h'_e`, `V_r h'_e` and `V_o h'_e`; constant across decoding steps.
#[derive(Clone, Copy, Debug)]
pub struct LatentInjection {
    pub candidate: NodeId,
    pub reset: NodeId,
    pub update: NodeId,
}

pub fn latent_injection(
    g: &mut Graph,
    ps: &ParamSet,
    h_e_prime: &[(&'static str, NodeId)],
) -> Result<LatentInjection> {
    let mut sums = [None::<NodeId>; 3];
    for (slot, v) in sums.iter_mut().zip(["V", "V_r", "V_o"]) {
        let mut terms = Vec::new();
        for (block, node) in h_e_prime {
            let w = ps.node(g, &format!("dec.gru2.{v}.{block}"))?;
            terms.push(g.matmul(w, *node)?);
        }
        *slot = Some(g.add_all(&terms)?);
    }
    let [Some(candidate), Some(reset), Some(update)] = sums else {
        unreachable!()
    };
    Ok(LatentInjection {
        candidate,
        reset,
        update,
    })
}

/// Decoder state after one target position.
#[derive(Clone, Debug)]
pub struct DecoderState {
    pub s: NodeId,
    pub s_intermediate: NodeId,
    pub context: NodeId,
    pub attention: NodeId,
}

/// `s_0 = tanh(W_init h_f)`.
pub fn initial_state(g: &mut Graph, ps: &ParamSet, h_f: NodeId) -> Result<NodeId> {
    let w = ps.node(g, "dec.W_init")?;
    let pre = g.matmul(w, h_f)?;
    g.tanh(pre)
}

/// Embedding of the previous word; the zero vector before the first word.
pub fn previous_embedding(g: &mut Graph, ps: &ParamSet, prev: Option<u32>) -> Result<NodeId> {
    let table = ps.node(g, TARGET_EMBEDDING)?;
    let [d_emb, vocab] = g.shape(table).try_into().expect("embedding is a matrix");
    match prev {
        None => Ok(g.constant(Tensor::zeros(&[d_emb]))),
        Some(id) if (id as usize) < vocab => g.column(table, id as usize),
        Some(id) => Err(Error::Lookup {
            id: id as usize,
            size: vocab,
        }),
    }
}

/// First GRU: intermediate state `s'_j` from `s_{j-1}` and `E[y_{j-1}]`.
pub fn gru1_step(g: &mut Graph, ps: &ParamSet, s_prev: NodeId, y_prev: NodeId) -> Result<NodeId> {
    text_encoder::gru_step_input(g, ps, GRU1, s_prev, y_prev)
}

/// Attention read: `e_i = U_att · tanh(W_catt h_i + W_att s')`,
/// `α = softmax(e)`, `c = tanh(Σ α_i h_i)`.
pub fn attend(
    g: &mut Graph,
    ps: &ParamSet,
    s_int: NodeId,
    src: &SourceContext,
) -> Result<(NodeId, NodeId)> {
    let w_att = ps.node(g, "dec.att.W_att")?;
    let u_att = ps.node(g, "dec.att.U_att")?;
    let query = g.matmul(w_att, s_int)?;
    let pre = g.add_row_bias(src.keys, query)?;
    let act = g.tanh(pre)?;
    let mut scores = g.matmul(act, u_att)?;
    if let Some(mask) = src.mask {
        scores = g.add(scores, mask)?;
    }
    let alpha = g.softmax(scores)?;
    let mixed = g.matmul(alpha, src.states)?;
    let context = g.tanh(mixed)?;
    Ok((context, alpha))
}

/// Second GRU with latent injection:
/// `r = σ(W_r c + U_r s' + V_r h'_e)`, `o = σ(W_o c + U_o s' + V_o h'_e)`,
/// `s~ = tanh(W c + r ⊙ (U s') + V h'_e)`, `s = (1 - o') ⊙ s~ + o ⊙ s'`.
///
/// `o_first` is the first GRU's update gate `o'_j`; with
/// [`DecoderOptions::gate_fix`] the conventional `(1 - o)` is used instead.
pub fn gru2_step(
    g: &mut Graph,
    ps: &ParamSet,
    s_int: NodeId,
    context: NodeId,
    latent: Option<&LatentInjection>,
    o_first: NodeId,
    opts: DecoderOptions,
) -> Result<NodeId> {
    let gate = |g: &mut Graph, w: &str, u: &str, inject: Option<NodeId>| -> Result<NodeId> {
        let w = ps.node(g, &format!("dec.gru2.{w}"))?;
        let u = ps.node(g, &format!("dec.gru2.{u}"))?;
        let wc = g.matmul(w, context)?;
        let us = g.matmul(u, s_int)?;
        let mut pre = g.add(wc, us)?;
        if let Some(v) = inject {
            pre = g.add(pre, v)?;
        }
        g.sigmoid(pre)
    };
    let r = gate(g, "W_r", "U_r", latent.map(|l| l.reset))?;
    let o = gate(g, "W_o", "U_o", latent.map(|l| l.update))?;

    let w = ps.node(g, "dec.gru2.W")?;
    let u = ps.node(g, "dec.gru2.U")?;
    let wc = g.matmul(w, context)?;
    let us = g.matmul(u, s_int)?;
    let gated = g.mul(r, us)?;
    let mut pre = g.add(wc, gated)?;
    if let Some(l) = latent {
        pre = g.add(pre, l.candidate)?;
    }
    let cand = g.tanh(pre)?;

    let keep = g.one_minus(if opts.gate_fix { o } else { o_first })?;
    let new_part = g.mul(keep, cand)?;
    let old_part = g.mul(o, s_int)?;
    g.add(new_part, old_part)
}

/// `u = L_u tanh(E[y_{j-1}] + L_s s_j + L_x c_j)`, returned as log-probabilities.
pub fn output_logits(
    g: &mut Graph,
    ps: &ParamSet,
    y_prev: NodeId,
    s: NodeId,
    context: NodeId,
) -> Result<NodeId> {
    let l_s = ps.node(g, "dec.out.L_s")?;
    let l_x = ps.node(g, "dec.out.L_x")?;
    let l_u = ps.node(g, "dec.out.L_u")?;
    let ls = g.matmul(l_s, s)?;
    let lx = g.matmul(l_x, context)?;
    let sum = g.add_all(&[y_prev, ls, lx])?;
    let act = g.tanh(sum)?;
    let logits = g.matmul(l_u, act)?;
    g.log_softmax(logits)
}

/// Node-level intermediates of one decoding step.
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub state: DecoderState,
    pub log_probs: NodeId,
}

/// One full decoder transition from `s_{j-1}` and the previous word.
pub fn step(
    g: &mut Graph,
    ps: &ParamSet,
    opts: DecoderOptions,
    s_prev: NodeId,
    prev: Option<u32>,
    src: &SourceContext,
    latent: Option<&LatentInjection>,
) -> Result<StepOutput> {
    let y_prev = previous_embedding(g, ps, prev)?;
    // first GRU, spelled out to expose its update gate to the second GRU
    let inputs = text_encoder::gate_inputs(g, ps, GRU1, y_prev)?;
    let uo = ps.node(g, &format!("{GRU1}.U_o"))?;
    let uo_s = g.matmul(uo, s_prev)?;
    let o_pre = g.add(inputs.update, uo_s)?;
    let o_first = g.sigmoid(o_pre)?;
    let s_int = text_encoder::gru_step(g, ps, GRU1, s_prev, &inputs)?;

    let (context, attention) = attend(g, ps, s_int, src)?;
    let s = gru2_step(g, ps, s_int, context, latent, o_first, opts)?;
    let log_probs = output_logits(g, ps, y_prev, s, context)?;
    Ok(StepOutput {
        state: DecoderState {
            s,
            s_intermediate: s_int,
            context,
            attention,
        },
        log_probs,
    })
}

/// Result of scoring a reference target.
#[derive(Clone, Debug)]
pub struct TeacherForced {
    /// `Σ_j log p(y_j | y_<j, z, x)` as a scalar node.
    pub log_likelihood: NodeId,
    pub steps: Vec<StepOutput>,
}

pub fn decode_teacher_forced(
    g: &mut Graph,
    ps: &ParamSet,
    opts: DecoderOptions,
    src: &SourceContext,
    latent: Option<&LatentInjection>,
    target: &[u32],
) -> Result<TeacherForced> {
    if target.is_empty() {
        return Err(Error::Contract("empty target sequence".into()));
    }
    let mut s = initial_state(g, ps, src.pooled)?;
    let mut prev = None;
    let mut picks = Vec::with_capacity(target.len());
    let mut steps = Vec::with_capacity(target.len());
    for &y in target {
        let out = step(g, ps, opts, s, prev, src, latent)?;
        picks.push(g.pick(out.log_probs, y as usize)?);
        s = out.state.s;
        prev = Some(y);
        steps.push(out);
    }
    let log_likelihood = g.add_all(&picks)?;
    Ok(TeacherForced {
        log_likelihood,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradient;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const D_H: usize = 4;
    const D_EMB: usize = 3;
    const VOCAB: usize = 5;

    fn specs(latent: bool) -> Vec<ParamSpec> {
        let blocks: &[(&str, usize)] = if latent { &[("src", 2), ("tgt", 2)] } else { &[] };
        let mut s = decoder_specs(D_H, D_EMB, VOCAB, blocks);
        s.push(ParamSpec::weight(TARGET_EMBEDDING, &[D_EMB, VOCAB]));
        s
    }

    fn zeros(specs: &[ParamSpec]) -> ParamSet {
        let mut ps = ParamSet::new();
        for s in specs {
            ps.insert(&s.name, Tensor::zeros(&s.shape));
        }
        ps
    }

    fn random(seed: u64, latent: bool) -> ParamSet {
        ParamSet::init(&specs(latent), 0.6, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn source(g: &mut Graph, ps: &ParamSet, rows: &[Vec<f64>]) -> SourceContext {
        let states = g.constant(Tensor::from_rows(rows).unwrap());
        let pooled = g.mean_rows(states).unwrap();
        SourceContext::new(g, ps, EncoderOutput { states, pooled }).unwrap()
    }

    fn src_rows() -> Vec<Vec<f64>> {
        vec![
            vec![0.2, -0.5, 0.9, 0.1],
            vec![-0.3, 0.4, 0.0, 0.7],
            vec![0.8, 0.1, -0.6, -0.2],
        ]
    }

    #[test]
    fn gru1_zero_params_halves_state() {
        let ps = zeros(&specs(false));
        let mut g = Graph::new();
        let s = g.constant(Tensor::vector(vec![1.0, -0.5, 0.25, 2.0]));
        let y = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let out = gru1_step(&mut g, &ps, s, y).unwrap();
        assert_eq!(g.value(out).data(), &[0.5, -0.25, 0.125, 1.0]);
        let z = g.constant(Tensor::zeros(&[4]));
        let out = gru1_step(&mut g, &ps, z, y).unwrap();
        assert_eq!(g.value(out).data(), &[0.0; 4]);
    }

    #[test]
    fn gru1_gradient() {
        let ps = random(1, false);
        let mut g = Graph::new();
        let s = g.constant(Tensor::vector(vec![0.3, -0.5, 0.25, 0.6]));
        let y = previous_embedding(&mut g, &ps, Some(2)).unwrap();
        let out = gru1_step(&mut g, &ps, s, y).unwrap();
        let sq = g.square(out).unwrap();
        let loss = g.sum(sq).unwrap();
        let report = check_gradient(&mut g, loss, 1e-5).unwrap();
        assert!(report.passes(1e-4, 1e-8), "{report}");
    }

    #[test]
    fn single_source_attention() {
        let ps = random(2, false);
        let mut g = Graph::new();
        let src = source(&mut g, &ps, &[vec![0.4, -0.2, 0.9, 0.0]]);
        let s = g.constant(Tensor::vector(vec![0.1, 0.2, 0.3, 0.4]));
        let (c, a) = attend(&mut g, &ps, s, &src).unwrap();
        assert_eq!(g.value(a).data(), &[1.0]);
        let expect: Vec<f64> = [0.4f64, -0.2, 0.9, 0.0].iter().map(|x| x.tanh()).collect();
        assert_eq!(g.value(c).data(), expect.as_slice());
    }

    #[test]
    fn identical_rows_or_zero_scoring_give_uniform_attention() {
        let ps = random(3, false);
        let mut g = Graph::new();
        let row = vec![0.4, -0.2, 0.9, 0.0];
        let src = source(&mut g, &ps, &[row.clone(), row.clone(), row]);
        let s = g.constant(Tensor::vector(vec![0.1, 0.2, 0.3, 0.4]));
        let (_, a) = attend(&mut g, &ps, s, &src).unwrap();
        for &v in g.value(a).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }

        let mut ps = random(3, false);
        ps.insert("dec.att.U_att", Tensor::zeros(&[D_H]));
        let mut g = Graph::new();
        let src = source(&mut g, &ps, &src_rows());
        let s = g.constant(Tensor::vector(vec![0.1, 0.2, 0.3, 0.4]));
        let (_, a) = attend(&mut g, &ps, s, &src).unwrap();
        assert!(g.value(a).data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn padding_mask_reproduces_unpadded_attention() {
        let ps = random(4, false);
        let mut g = Graph::new();
        let rows = src_rows();
        let plain = source(&mut g, &ps, &rows[..2]);
        let mut padded_rows = rows[..2].to_vec();
        padded_rows.push(vec![9.0, -9.0, 9.0, 9.0]);
        let states = g.constant(Tensor::from_rows(&padded_rows).unwrap());
        let padded = SourceContext::new(&mut g, &ps, EncoderOutput { states, pooled: plain.pooled })
            .unwrap()
            .with_padding(&mut g, 2)
            .unwrap();
        let s = g.constant(Tensor::vector(vec![0.3, -0.1, 0.5, 0.2]));
        let (c1, a1) = attend(&mut g, &ps, s, &plain).unwrap();
        let (c2, a2) = attend(&mut g, &ps, s, &padded).unwrap();
        assert_eq!(&g.value(a2).data()[..2], g.value(a1).data());
        assert_eq!(g.value(a2).data()[2], 0.0);
        assert_eq!(g.value(c1), g.value(c2));
    }

    #[test]
    fn zero_injection_makes_second_gru_ignore_latent() {
        let mut ps = random(5, true);
        for blk in ["src", "tgt"] {
            for v in ["V", "V_r", "V_o"] {
                ps.insert(&format!("dec.gru2.{v}.{blk}"), Tensor::zeros(&[D_H, 2]));
            }
        }
        let mut g = Graph::new();
        let s = g.constant(Tensor::vector(vec![0.3, -0.1, 0.5, 0.2]));
        let c = g.constant(Tensor::vector(vec![0.1, 0.1, -0.4, 0.3]));
        let o1 = g.constant(Tensor::vector(vec![0.5, 0.4, 0.6, 0.7]));
        let mut outs = Vec::new();
        for latent in [[0.9, -0.9], [-0.2, 0.05]] {
            let a = g.constant(Tensor::vector(latent.to_vec()));
            let b = g.constant(Tensor::vector(vec![latent[1], latent[0]]));
            let inj = latent_injection(&mut g, &ps, &[("src", a), ("tgt", b)]).unwrap();
            let out = gru2_step(&mut g, &ps, s, c, Some(&inj), o1, DecoderOptions::default()).unwrap();
            outs.push(g.value(out).clone());
        }
        assert_eq!(outs[0], outs[1]);
    }

    #[test]
    fn second_gru_zero_params_halves_state() {
        let ps = zeros(&specs(true));
        let mut g = Graph::new();
        let s = g.constant(Tensor::vector(vec![1.0, -2.0, 0.5, 0.0]));
        let c = g.constant(Tensor::vector(vec![0.7, 0.7, 0.7, 0.7]));
        // with zero params the first GRU's update gate is also σ(0)
        let o1 = g.constant(Tensor::filled(&[4], 0.5));
        let h = g.constant(Tensor::vector(vec![0.3, 0.3]));
        let inj = latent_injection(&mut g, &ps, &[("src", h), ("tgt", h)]).unwrap();
        for gate_fix in [false, true] {
            let out = gru2_step(&mut g, &ps, s, c, Some(&inj), o1, DecoderOptions { gate_fix }).unwrap();
            assert_eq!(g.value(out).data(), &[0.5, -1.0, 0.25, 0.0]);
        }
    }

    #[test]
    fn second_gru_gradient() {
        let ps = random(6, true);
        let mut g = Graph::new();
        let s = g.constant(Tensor::vector(vec![0.3, -0.1, 0.5, 0.2]));
        let c = g.constant(Tensor::vector(vec![0.1, 0.1, -0.4, 0.3]));
        let o1 = g.constant(Tensor::vector(vec![0.5, 0.4, 0.6, 0.7]));
        let a = g.constant(Tensor::vector(vec![0.2, -0.6]));
        let inj = latent_injection(&mut g, &ps, &[("src", a), ("tgt", a)]).unwrap();
        for gate_fix in [false, true] {
            let out = gru2_step(&mut g, &ps, s, c, Some(&inj), o1, DecoderOptions { gate_fix }).unwrap();
            let t = g.tanh(out).unwrap();
            let loss = g.sum(t).unwrap();
            let report = check_gradient(&mut g, loss, 1e-5).unwrap();
            assert!(report.passes(1e-4, 1e-8), "{report}");
        }
    }

    #[test]
    fn zero_output_params_give_uniform_distribution() {
        let ps = zeros(&specs(false));
        let mut g = Graph::new();
        let y = g.constant(Tensor::zeros(&[D_EMB]));
        let s = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0, 4.0]));
        let lp = output_logits(&mut g, &ps, y, s, s).unwrap();
        for &v in g.value(lp).data() {
            assert!((v + (VOCAB as f64).ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn log_probs_normalize() {
        let ps = random(7, false);
        let mut g = Graph::new();
        let y = previous_embedding(&mut g, &ps, Some(1)).unwrap();
        let s = g.constant(Tensor::vector(vec![1.0, -2.0, 3.0, 0.4]));
        let lp = output_logits(&mut g, &ps, y, s, s).unwrap();
        let total: f64 = g.value(lp).data().iter().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn log_softmax_is_shift_invariant() {
        let mut g = Graph::new();
        let u = g.constant(Tensor::vector(vec![0.3, -1.0, 2.2]));
        let shifted = g.add_scalar(u, 17.5).unwrap();
        let a = g.log_softmax(u).unwrap();
        let b = g.log_softmax(shifted).unwrap();
        assert!(g.value(a).max_abs_diff(g.value(b)) < 1e-14);
    }

    #[test]
    fn zero_model_scores_minus_t_log_k() {
        let ps = zeros(&specs(false));
        let mut g = Graph::new();
        let src = source(&mut g, &ps, &src_rows());
        let tf = decode_teacher_forced(&mut g, &ps, DecoderOptions::default(), &src, None, &[3, 1, 4, 0])
            .unwrap();
        let expected = -4.0 * (VOCAB as f64).ln();
        assert!((g.value(tf.log_likelihood).item() - expected).abs() < 1e-12);
    }

    #[test]
    fn attention_rows_sum_to_one_each_step() {
        let ps = random(8, false);
        let mut g = Graph::new();
        let src = source(&mut g, &ps, &src_rows());
        let tf = decode_teacher_forced(&mut g, &ps, DecoderOptions::default(), &src, None, &[2, 3, 0])
            .unwrap();
        for st in &tf.steps {
            let a = g.value(st.state.attention).data();
            assert!(a.iter().all(|&v| v >= 0.0));
            assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(g.value(st.state.context).data().iter().all(|v| v.abs() < 1.0));
        }
    }

    /// Exhaustive check over all length-2 targets of a 3-token vocabulary:
    /// each score is the product of its per-step conditionals, and summing
    /// over the second token sums out to the first step's marginal.
    #[test]
    fn enumerated_targets_follow_chain_rule() {
        const V: usize = 3;
        let mut s = decoder_specs(D_H, D_EMB, V, &[]);
        s.push(ParamSpec::weight(TARGET_EMBEDDING, &[D_EMB, V]));
        let ps = ParamSet::init(&s, 0.8, &mut ChaCha8Rng::seed_from_u64(9));
        let opts = DecoderOptions::default();
        let mut g = Graph::new();
        let src = source(&mut g, &ps, &src_rows());
        let mut total = 0.0;
        for a in 0..V as u32 {
            let mut row_mass = 0.0;
            for b in 0..V as u32 {
                let tf = decode_teacher_forced(&mut g, &ps, opts, &src, None, &[a, b]).unwrap();
                let joint = g.value(tf.log_likelihood).item();
                // per-step recomputation
                let s0 = initial_state(&mut g, &ps, src.pooled).unwrap();
                let st1 = step(&mut g, &ps, opts, s0, None, &src, None).unwrap();
                let st2 = step(&mut g, &ps, opts, st1.state.s, Some(a), &src, None).unwrap();
                let p1 = g.value(st1.log_probs).data()[a as usize];
                let p2 = g.value(st2.log_probs).data()[b as usize];
                assert!((joint - (p1 + p2)).abs() < 1e-12);
                assert!(joint <= 0.0);
                row_mass += joint.exp();
                if b == V as u32 - 1 {
                    assert!((row_mass - p1.exp()).abs() < 1e-12);
                }
            }
            total += row_mass;
        }
        assert!((total - 1.0).abs() < 1e-12);
    }
}
