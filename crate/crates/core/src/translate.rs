//! Beam-search translation from the prior mean.

use std::cmp::Ordering;

use crate::data::vocab::EOS;
use crate::decoder;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::model::{self, ModelConfig, TranslationInput};
use crate::params::ParamSet;

pub const DEFAULT_BEAM: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BeamOptions {
    pub beam_size: usize,
    pub max_len: usize,
    /// Rank finished hypotheses by mean per-token log probability.
    pub length_normalize: bool,
}

impl Default for BeamOptions {
    fn default() -> Self {
        Self {
            beam_size: DEFAULT_BEAM,
            max_len: 100,
            length_normalize: false,
        }
    }
}

/// A decoded sequence with its score and attention rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Token ids; ends with EOS when `finished`.
    pub tokens: Vec<u32>,
    pub log_prob: f64,
    pub finished: bool,
    /// Attention over the source for every emitted token.
    pub attention: Vec<Vec<f64>>,
}

impl Hypothesis {
    /// Tokens without the trailing EOS.
    pub fn words(&self) -> &[u32] {
        match self.tokens.last() {
            Some(&EOS) if self.finished => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }

    fn rank_score(&self, normalize: bool) -> f64 {
        if normalize && !self.tokens.is_empty() {
            self.log_prob / self.tokens.len() as f64
        } else {
            self.log_prob
        }
    }
}

/// Higher score first, then the shorter sequence, then smaller ids.
fn better(a: &Hypothesis, b: &Hypothesis, normalize: bool) -> Ordering {
    b.rank_score(normalize)
        .total_cmp(&a.rank_score(normalize))
        .then(a.tokens.len().cmp(&b.tokens.len()))
        .then_with(|| a.tokens.cmp(&b.tokens))
}

struct Live {
    hyp: Hypothesis,
    state: NodeId,
}

/// Length-capped beam search keeping `beam_size` live hypotheses per step.
///
/// Hypotheses ending in EOS leave the beam. Without length normalization the
/// search stops as soon as no live hypothesis can overtake the best finished
/// one; if nothing finished by `max_len` the best unfinished one is returned.
pub fn beam_search(
    g: &mut Graph,
    ps: &ParamSet,
    cfg: &ModelConfig,
    input: &TranslationInput,
    opts: BeamOptions,
) -> Result<Hypothesis> {
    if opts.beam_size == 0 || opts.max_len == 0 {
        return Err(Error::Contract("beam size and max length must be positive".into()));
    }
    let dopts = cfg.decoder_options();
    let s0 = decoder::initial_state(g, ps, input.source.pooled)?;
    let mut live = vec![Live {
        hyp: Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            finished: false,
            attention: Vec::new(),
        },
        state: s0,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for _ in 0..opts.max_len {
        let mut candidates: Vec<(Hypothesis, NodeId)> = Vec::new();
        for l in &live {
            let out = decoder::step(g, ps, dopts, l.state, l.hyp.tokens.last().copied(), &input.source, input.latent.as_ref())?;
            let attention = g.value(out.state.attention).data().to_vec();
            for (tok, &lp) in g.value(out.log_probs).data().iter().enumerate() {
                let mut tokens = l.hyp.tokens.clone();
                tokens.push(tok as u32);
                let mut att = l.hyp.attention.clone();
                att.push(attention.clone());
                candidates.push((
                    Hypothesis {
                        tokens,
                        log_prob: l.hyp.log_prob + lp,
                        finished: tok as u32 == EOS,
                        attention: att,
                    },
                    out.state.s,
                ));
            }
        }
        // expansion order is by raw score; normalization only affects the final pick
        candidates.sort_by(|a, b| better(&a.0, &b.0, false));
        live.clear();
        // finished hypotheses ranked above the last kept live one are retired
        for (hyp, state) in candidates {
            if live.len() == opts.beam_size {
                break;
            }
            if hyp.finished {
                finished.push(hyp);
            } else {
                live.push(Live { hyp, state });
            }
        }
        let Some(front) = live.first() else { break };
        if opts.length_normalize {
            if finished.len() >= opts.beam_size {
                break;
            }
        } else if finished.iter().any(|f| f.log_prob >= front.hyp.log_prob) {
            // scores only fall as hypotheses grow
            break;
        }
    }

    let pool = if finished.is_empty() {
        live.into_iter().map(|l| l.hyp).collect()
    } else {
        finished
    };
    pool.into_iter()
        .min_by(|a, b| better(a, b, opts.length_normalize))
        .ok_or_else(|| Error::Contract("beam search produced no hypothesis".into()))
}

/// Encodes `source` and runs [`beam_search`] in a fresh graph.
pub fn translate(ps: &ParamSet, cfg: &ModelConfig, source: &[u32], opts: BeamOptions) -> Result<Hypothesis> {
    let mut g = Graph::new();
    let input = model::encode_for_translation(&mut g, ps, cfg, source)?;
    beam_search(&mut g, ps, cfg, &input, opts)
}

/// Translates every source on up to `threads` workers; output order
/// matches input order.
pub fn translate_all(
    ps: &ParamSet,
    cfg: &ModelConfig,
    sources: &[Vec<u32>],
    opts: BeamOptions,
    threads: usize,
) -> Result<Vec<Hypothesis>> {
    let threads = threads.clamp(1, sources.len().max(1));
    let chunk = sources.len().div_ceil(threads).max(1);
    std::thread::scope(|scope| {
        let handles: Vec<_> = sources
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || part.iter().map(|s| translate(ps, cfg, s, opts)).collect::<Result<Vec<_>>>())
            })
            .collect();
        let mut out = Vec::with_capacity(sources.len());
        for h in handles {
            out.extend(h.join().expect("translation worker panicked")?);
        }
        Ok(out)
    })
}
