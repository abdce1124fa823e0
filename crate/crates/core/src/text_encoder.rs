//! Token embedding, bidirectional GRU encoding and mean pooling.
//!
//! Sequences are encoded left to right and right to left by two GRU chains
//! of width `d_h / 2`, each starting from a zero state. Position `i` of the
//! result is `[forward_i ; backward_i]`.

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::params::{ParamSet, ParamSpec};
use crate::tensor::Tensor;

/// Precomputed input-side gate terms `W_r x`, `W_o x` and `W x`.
#[derive(Clone, Copy, Debug)]
pub struct GateInputs {
    pub reset: NodeId,
    pub update: NodeId,
    pub candidate: NodeId,
}

/// Parameter declarations for one GRU chain: `W, W_r, W_o` (`width x input`)
/// and `U, U_r, U_o` (`width x width`). No biases.
pub fn gru_specs(prefix: &str, input: usize, width: usize) -> Vec<ParamSpec> {
    let mut specs = Vec::with_capacity(6);
    for w in ["W", "W_r", "W_o"] {
        specs.push(ParamSpec::weight(format!("{prefix}.{w}"), &[width, input]));
    }
    for u in ["U", "U_r", "U_o"] {
        specs.push(ParamSpec::weight(format!("{prefix}.{u}"), &[width, width]));
    }
    specs
}

/// Specs for a bidirectional encoder with total state width `d_h`.
pub fn bigru_specs(prefix: &str, input: usize, d_h: usize) -> Vec<ParamSpec> {
    let mut specs = gru_specs(&format!("{prefix}.fwd"), input, d_h / 2);
    specs.extend(gru_specs(&format!("{prefix}.bwd"), input, d_h / 2));
    specs
}

/// Input-side gate terms for a single input vector.
pub fn gate_inputs(g: &mut Graph, ps: &ParamSet, prefix: &str, x: NodeId) -> Result<GateInputs> {
    let wr = ps.node(g, &format!("{prefix}.W_r"))?;
    let wo = ps.node(g, &format!("{prefix}.W_o"))?;
    let w = ps.node(g, &format!("{prefix}.W"))?;
    Ok(GateInputs {
        reset: g.matmul(wr, x)?,
        update: g.matmul(wo, x)?,
        candidate: g.matmul(w, x)?,
    })
}

/// Input-side gate terms for every row of `xs` (`T x input`), as `T x width`
/// matrices.
pub fn gate_inputs_seq(
    g: &mut Graph,
    ps: &ParamSet,
    prefix: &str,
    xs: NodeId,
) -> Result<[NodeId; 3]> {
    let mut out = [xs; 3];
    for (slot, name) in out.iter_mut().zip(["W_r", "W_o", "W"]) {
        let w = ps.node(g, &format!("{prefix}.{name}"))?;
        let wt = g.transpose(w)?;
        *slot = g.matmul(xs, wt)?;
    }
    Ok(out)
}

/// One gated update:
/// `r = σ(W_r x + U_r h)`, `o = σ(W_o x + U_o h)`,
/// `h~ = tanh(W x + r ⊙ (U h))`, `h' = (1 - o) ⊙ h~ + o ⊙ h`.
pub fn gru_step(
    g: &mut Graph,
    ps: &ParamSet,
    prefix: &str,
    prev: NodeId,
    input: &GateInputs,
) -> Result<NodeId> {
    let ur = ps.node(g, &format!("{prefix}.U_r"))?;
    let uo = ps.node(g, &format!("{prefix}.U_o"))?;
    let u = ps.node(g, &format!("{prefix}.U"))?;

    let ur_h = g.matmul(ur, prev)?;
    let r_pre = g.add(input.reset, ur_h)?;
    let r = g.sigmoid(r_pre)?;

    let uo_h = g.matmul(uo, prev)?;
    let o_pre = g.add(input.update, uo_h)?;
    let o = g.sigmoid(o_pre)?;

    let u_h = g.matmul(u, prev)?;
    let gated = g.mul(r, u_h)?;
    let c_pre = g.add(input.candidate, gated)?;
    let cand = g.tanh(c_pre)?;

    let keep = g.one_minus(o)?;
    let new_part = g.mul(keep, cand)?;
    let old_part = g.mul(o, prev)?;
    g.add(new_part, old_part)
}

/// [`gru_step`] from a raw input vector.
pub fn gru_step_input(
    g: &mut Graph,
    ps: &ParamSet,
    prefix: &str,
    prev: NodeId,
    x: NodeId,
) -> Result<NodeId> {
    let inputs = gate_inputs(g, ps, prefix, x)?;
    gru_step(g, ps, prefix, prev, &inputs)
}

/// Looks up embedding columns of `table` (`d_emb x vocab`) for each id,
/// returning a `T x d_emb` matrix.
pub fn embed(g: &mut Graph, table: NodeId, ids: &[u32]) -> Result<NodeId> {
    if ids.is_empty() {
        return Err(Error::Contract("cannot embed an empty sequence".into()));
    }
    let vocab = g.shape(table)[1];
    let mut cols = Vec::with_capacity(ids.len());
    for &id in ids {
        let id = id as usize;
        if id >= vocab {
            return Err(Error::Lookup { id, size: vocab });
        }
        cols.push(g.column(table, id)?);
    }
    g.concat_rows(&cols)
}

/// Runs one GRU chain over `seq` (`T x input`) and returns the state after
/// each position, in input order. `reverse` reads the rows from last to first.
fn run_chain(
    g: &mut Graph,
    ps: &ParamSet,
    prefix: &str,
    seq: NodeId,
    width: usize,
    reverse: bool,
) -> Result<Vec<NodeId>> {
    let t = g.shape(seq)[0];
    let [xr, xo, xw] = gate_inputs_seq(g, ps, prefix, seq)?;
    let mut state = g.constant(Tensor::zeros(&[width]));
    let mut states = vec![state; t];
    let order: Vec<usize> = if reverse { (0..t).rev().collect() } else { (0..t).collect() };
    for i in order {
        let inputs = GateInputs {
            reset: g.row(xr, i)?,
            update: g.row(xo, i)?,
            candidate: g.row(xw, i)?,
        };
        state = gru_step(g, ps, prefix, state, &inputs)?;
        states[i] = state;
    }
    Ok(states)
}

/// Bidirectional encoding of an embedded sequence; returns `T x d_h` states.
pub fn encode_bidirectional(
    g: &mut Graph,
    ps: &ParamSet,
    prefix: &str,
    seq: NodeId,
    d_h: usize,
) -> Result<NodeId> {
    if d_h == 0 || d_h % 2 != 0 {
        return Err(Error::Config(format!("state width must be even and positive, got {d_h}")));
    }
    if g.shape(seq).len() != 2 {
        return Err(Error::dim("encode_bidirectional", g.shape(seq), &[]));
    }
    let half = d_h / 2;
    let fwd = run_chain(g, ps, &format!("{prefix}.fwd"), seq, half, false)?;
    let bwd = run_chain(g, ps, &format!("{prefix}.bwd"), seq, half, true)?;
    let mut rows = Vec::with_capacity(fwd.len());
    for (f, b) in fwd.into_iter().zip(bwd) {
        rows.push(g.concat(&[f, b])?);
    }
    g.concat_rows(&rows)
}

/// Mean over the rows of a `T x d_h` state matrix.
pub fn mean_pool(g: &mut Graph, states: NodeId) -> Result<NodeId> {
    g.mean_rows(states)
}

/// Result of encoding one sentence.
#[derive(Clone, Copy, Debug)]
pub struct EncoderOutput {
    pub states: NodeId,
    pub pooled: NodeId,
}

pub fn encode(
    g: &mut Graph,
    ps: &ParamSet,
    prefix: &str,
    seq: NodeId,
    d_h: usize,
) -> Result<EncoderOutput> {
    let states = encode_bidirectional(g, ps, prefix, seq, d_h)?;
    let pooled = mean_pool(g, states)?;
    Ok(EncoderOutput { states, pooled })
}
