//! ELBO training with Adadelta, L2 decay and validation-driven early stopping.

use std::collections::BTreeMap;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::checkpoint::{Checkpoint, RngState};
use crate::error::{Error, Result};
use crate::graph::{GradientMap, Graph};
use crate::image_encoder::ImageFeatureSet;
use crate::model::{self, Example, ModelConfig};
use crate::params::{self, ParamSet, TransferReport};
use crate::tensor::Tensor;
use crate::variant::Variant;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub variant: Variant,
    pub dim: usize,
    pub dim_word: usize,
    pub dimv: usize,
    pub dim_pic: usize,
    pub dim_fc7: usize,
    pub batch_size: usize,
    pub maxlen: usize,
    pub lr: f64,
    pub decay_c: f64,
    pub seed: u64,
    pub validate_every: usize,
    pub patience: usize,
    /// Hard cap on updates; 0 means unlimited.
    pub max_iterations: usize,
    /// Standard deviation of the weight initialization.
    pub init_std: f64,
    pub rho: f64,
    pub eps: f64,
    pub gate_fix: bool,
    pub latent_bypass: bool,
}

impl TrainingConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            dim: 256,
            dim_word: 256,
            dimv: 256,
            dim_pic: variant.default_dim_pic(),
            dim_fc7: 4096,
            batch_size: 32,
            maxlen: 50,
            lr: 1.0,
            decay_c: variant.default_decay_c(),
            seed: 1234,
            validate_every: 1000,
            patience: 10,
            max_iterations: 0,
            init_std: 0.1,
            rho: 0.95,
            eps: 1e-6,
            gate_fix: false,
            latent_bypass: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.maxlen == 0 || self.validate_every == 0 {
            return Err(Error::Config("batch_size, maxlen and validate_every must be positive".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.init_std >= 0.0 && self.decay_c >= 0.0) {
            return Err(Error::Config("lr must be positive, init_std and decay_c nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.rho) || self.eps <= 0.0 {
            return Err(Error::Config("rho must lie in [0, 1) and eps be positive".into()));
        }
        Ok(())
    }

    pub fn model(&self, src_vocab: usize, tgt_vocab: usize) -> ModelConfig {
        ModelConfig {
            variant: self.variant,
            d_h: self.dim,
            d_emb: self.dim_word,
            d_z: self.dimv,
            d_pi: self.dim_pic,
            d_fc7: self.dim_fc7,
            src_vocab,
            tgt_vocab,
            gate_fix: self.gate_fix,
            latent_bypass: self.latent_bypass,
        }
    }
}

/// Adadelta accumulators for every parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Adadelta {
    pub rho: f64,
    pub eps: f64,
    pub lr: f64,
    /// Running `E[g²]`.
    pub square_avg: BTreeMap<String, Vec<f64>>,
    /// Running `E[Δ²]`.
    pub acc_delta: BTreeMap<String, Vec<f64>>,
}

impl Adadelta {
    pub fn new(rho: f64, eps: f64, lr: f64) -> Self {
        Self {
            rho,
            eps,
            lr,
            square_avg: BTreeMap::new(),
            acc_delta: BTreeMap::new(),
        }
    }

    /// One update. Parameters missing from `grads` see a zero gradient.
    pub fn step(&mut self, ps: &mut ParamSet, grads: &GradientMap) -> Result<()> {
        let (rho, eps, lr) = (self.rho, self.eps, self.lr);
        for (name, p) in ps.iter_mut() {
            let n = p.len();
            let g = match grads.get(name) {
                Some(g) if g.shape() != p.shape() => {
                    return Err(Error::dim("adadelta", p.shape(), g.shape()));
                }
                Some(g) => Some(g.data()),
                None => None,
            };
            let sq = self.square_avg.entry(name.to_string()).or_insert_with(|| vec![0.0; n]);
            let acc = self.acc_delta.entry(name.to_string()).or_insert_with(|| vec![0.0; n]);
            if sq.len() != n || acc.len() != n {
                return Err(Error::Shape(format!("optimizer state for {name} has the wrong size")));
            }
            let data = p.data_mut();
            for i in 0..n {
                let gi = g.map_or(0.0, |g| g[i]);
                sq[i] = rho * sq[i] + (1.0 - rho) * gi * gi;
                let delta = (acc[i] + eps).sqrt() / (sq[i] + eps).sqrt() * gi;
                acc[i] = rho * acc[i] + (1.0 - rho) * delta * delta;
                data[i] -= lr * delta;
            }
        }
        Ok(())
    }
}

/// Outcome of one validation for [`EarlyStopping`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

/// Stops after `patience` consecutive validations without a new best.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    bad: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            bad: 0,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn observe(&mut self, val_loss: f64) -> Verdict {
        if val_loss < self.best {
            self.best = val_loss;
            self.bad = 0;
            Verdict::Improved
        } else {
            self.bad += 1;
            if self.bad >= self.patience {
                Verdict::Stop
            } else {
                Verdict::Continue
            }
        }
    }
}

/// An encoded sentence pair; `image` indexes the feature sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentencePair {
    pub source: Vec<u32>,
    pub target: Vec<u32>,
    pub image: Option<usize>,
}

/// Aligned pairs plus the per-image feature sets they refer to.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub pairs: Vec<SentencePair>,
    pub features: Vec<ImageFeatureSet>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn example(&self, i: usize) -> Example<'_> {
        let p = &self.pairs[i];
        Example {
            source: &p.source,
            target: &p.target,
            features: p.image.map(|k| &self.features[k]),
        }
    }

    /// Checks alignment with the model: ids in range, features present and
    /// of the right width when the variant needs them.
    pub fn check(&self, cfg: &ModelConfig) -> Result<()> {
        for (i, p) in self.pairs.iter().enumerate() {
            if p.source.is_empty() || p.target.is_empty() {
                return Err(Error::Data(format!("pair {i} has an empty side")));
            }
            if let Some(&id) = p.source.iter().find(|&&t| t as usize >= cfg.src_vocab) {
                return Err(Error::Data(format!("pair {i}: source id {id} outside the vocabulary")));
            }
            if let Some(&id) = p.target.iter().find(|&&t| t as usize >= cfg.tgt_vocab) {
                return Err(Error::Data(format!("pair {i}: target id {id} outside the vocabulary")));
            }
            if cfg.variant.uses_image() {
                let f = p
                    .image
                    .and_then(|k| self.features.get(k))
                    .ok_or_else(|| Error::Data(format!("pair {i} has no image features")))?;
                if f.dim() != cfg.d_fc7 {
                    return Err(Error::Data(format!(
                        "pair {i}: feature dim {} but the model expects {}",
                        f.dim(),
                        cfg.d_fc7
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-sentence noise draws for one batch.
fn draw_noise(rng: &mut ChaCha8Rng, cfg: &ModelConfig, n: usize) -> Vec<Vec<f64>> {
    let d = if cfg.variant.is_variational() { cfg.d_z } else { 0 };
    (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect()).collect()
}

/// Mean of `KL - log p(y | x)` with the posterior mean as the latent and
/// no L2 term.
pub fn validation_loss(ps: &ParamSet, cfg: &ModelConfig, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Data("empty validation set".into()));
    }
    let zero = vec![0.0; if cfg.variant.is_variational() { cfg.d_z } else { 0 }];
    let mut total = 0.0;
    for i in 0..data.len() {
        let mut g = Graph::new();
        let terms = model::sentence_terms(&mut g, ps, cfg, &data.example(i), &zero)?;
        let loss = terms.loss(&mut g)?;
        total += g.value(loss).item();
    }
    Ok(total / data.len() as f64)
}

/// One row of the training curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub iteration: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut s = String::from("iteration,train_loss,val_loss\n");
    for p in points {
        s.push_str(&format!("{},{:.17e},{:.17e}\n", p.iteration, p.train_loss, p.val_loss));
    }
    s
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters at the best validation loss.
    pub best: Checkpoint,
    pub best_val_loss: f64,
    pub curve: Vec<CurvePoint>,
    pub iterations: usize,
    pub stopped_early: bool,
    pub transfer: Option<TransferReport>,
}

/// Fresh parameters for `cfg`, seeded from `init` by name when given.
pub fn initial_params(
    cfg: &ModelConfig,
    std: f64,
    rng: &mut ChaCha8Rng,
    init: Option<&ParamSet>,
) -> Result<(ParamSet, Option<TransferReport>)> {
    let mut ps = cfg.init_params(std, rng);
    let report = match init {
        Some(src) => Some(params::transfer(&mut ps, src)?),
        None => None,
    };
    Ok((ps, report))
}

pub fn train(
    tc: &TrainingConfig,
    train_set: &Dataset,
    valid_set: &Dataset,
    src_vocab: usize,
    tgt_vocab: usize,
    init: Option<&Checkpoint>,
) -> Result<TrainOutcome> {
    tc.validate()?;
    let cfg = tc.model(src_vocab, tgt_vocab);
    cfg.validate()?;
    train_set.check(&cfg)?;
    valid_set.check(&cfg)?;
    if train_set.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let (mut ps, transfer) = initial_params(&cfg, tc.init_std, &mut rng, init.map(|c| &c.params))?;
    if let Some(r) = &transfer {
        info!(
            "fine-tuning: {} parameters carried, {} fresh, {} ignored",
            r.carried.len(),
            r.fresh.len(),
            r.ignored.len()
        );
        debug!("fresh parameters: {}", r.fresh.join(", "));
    }
    let mut opt = Adadelta::new(tc.rho, tc.eps, tc.lr);
    let mut stopper = EarlyStopping::new(tc.patience);
    let mut curve = Vec::new();
    let mut best = (ps.clone(), opt.clone(), 0usize, rng_state(&rng));
    let mut iteration = 0usize;
    let mut since_val = (0.0, 0usize);
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    'epochs: loop {
        order.shuffle(&mut rng);
        for chunk in order.chunks(tc.batch_size) {
            let batch: Vec<Example<'_>> = chunk.iter().map(|&i| train_set.example(i)).collect();
            let noise = draw_noise(&mut rng, &cfg, batch.len());
            let mut g = Graph::new();
            let loss = model::batch_loss(&mut g, &ps, &cfg, &batch, &noise, tc.decay_c)?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Data(format!("loss diverged at iteration {iteration}")));
            }
            let grads = g.backward(loss)?;
            drop(g);
            opt.step(&mut ps, &grads)?;
            iteration += 1;
            since_val.0 += value;
            since_val.1 += 1;

            let at_cap = tc.max_iterations > 0 && iteration >= tc.max_iterations;
            if iteration % tc.validate_every == 0 || at_cap {
                let val = validation_loss(&ps, &cfg, valid_set)?;
                let train_loss = since_val.0 / since_val.1 as f64;
                since_val = (0.0, 0);
                curve.push(CurvePoint {
                    iteration,
                    train_loss,
                    val_loss: val,
                });
                info!("iter {iteration}: train {train_loss:.5} val {val:.5}");
                match stopper.observe(val) {
                    Verdict::Improved => best = (ps.clone(), opt.clone(), iteration, rng_state(&rng)),
                    Verdict::Continue => {}
                    Verdict::Stop => {
                        stopped_early = true;
                        break 'epochs;
                    }
                }
            }
            if at_cap {
                break 'epochs;
            }
        }
    }

    let (params, optimizer, best_iter, rng_saved) = best;
    Ok(TrainOutcome {
        best: Checkpoint {
            variant: tc.variant,
            gate_fix: tc.gate_fix,
            params,
            optimizer: Some(optimizer),
            iteration: best_iter as u64,
            rng: Some(rng_saved),
        },
        best_val_loss: stopper.best(),
        curve,
        iterations: iteration,
        stopped_early,
        transfer,
    })
}

fn rng_state(rng: &ChaCha8Rng) -> RngState {
    RngState {
        seed: rng.get_seed(),
        stream: rng.get_stream(),
        word_pos: rng.get_word_pos(),
    }
}

/// Gradient of the full training loss on one batch with fixed noise.
pub fn loss_and_gradient(
    ps: &ParamSet,
    cfg: &ModelConfig,
    batch: &[Example<'_>],
    noise: &[Vec<f64>],
    decay_c: f64,
) -> Result<(f64, GradientMap)> {
    let mut g = Graph::new();
    let loss = model::batch_loss(&mut g, ps, cfg, batch, noise, decay_c)?;
    Ok((g.value(loss).item(), g.backward(loss)?))
}

/// Zero tensors shaped like `ps`, handy for optimizer tests.
pub fn zero_gradients(ps: &ParamSet) -> GradientMap {
    ps.iter().map(|(n, t)| (n.to_string(), Tensor::zeros(t.shape()))).collect()
}
