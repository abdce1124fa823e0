//! Self-checks exposed on the command line: finite-difference gradients on
//! a toy model and Monte Carlo estimates of the KL term.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::gradcheck::{check_gradient, GradCheckReport};
use crate::graph::Graph;
use crate::image_encoder::ImageFeatureSet;
use crate::inferrer::GaussianDiag;
use crate::model::{self, Example, ModelConfig};
use crate::tensor::Tensor;
use crate::trainer::SentencePair;
use crate::variant::Variant;

pub const GRAD_STEP: f64 = 1e-5;
pub const GRAD_REL_TOL: f64 = 1e-4;
pub const GRAD_ABS_TOL: f64 = 1e-8;

/// Small model used by the gradient suite.
pub fn toy_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        d_h: 8,
        d_emb: 6,
        d_z: 4,
        d_pi: 6,
        d_fc7: 10,
        ..ModelConfig::new(variant, 5, 5)
    }
}

/// Random pairs of 1 to 3 words plus EOS, each with a 1 to 3 row image.
pub fn toy_batch(rng: &mut impl Rng, cfg: &ModelConfig, n: usize) -> (Vec<SentencePair>, Vec<ImageFeatureSet>) {
    let seq = |rng: &mut dyn rand::RngCore, vocab: usize| -> Vec<u32> {
        let len = rng.random_range(1..=3);
        let mut s: Vec<u32> = (0..len).map(|_| rng.random_range(1..vocab as u32)).collect();
        s.push(0);
        s
    };
    let mut pairs = Vec::with_capacity(n);
    let mut feats = Vec::with_capacity(n);
    for i in 0..n {
        let source = seq(rng, cfg.src_vocab);
        let target = seq(rng, cfg.tgt_vocab);
        let rows = rng.random_range(1..=3);
        let data = (0..rows * cfg.d_fc7).map(|_| rng.random_range(-1.0..1.0)).collect();
        feats.push(ImageFeatureSet::new(Tensor::new(vec![rows, cfg.d_fc7], data).expect("shape")).expect("rows"));
        pairs.push(SentencePair {
            source,
            target,
            image: Some(i),
        });
    }
    (pairs, feats)
}

/// Finite-difference check of the full training loss for one variant.
pub fn grad_check(variant: Variant, seed: u64) -> Result<GradCheckReport> {
    grad_check_config(&toy_config(variant), seed)
}

pub fn grad_check_config(cfg: &ModelConfig, seed: u64) -> Result<GradCheckReport> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ps = cfg.init_params(0.5, &mut rng);
    let (pairs, feats) = toy_batch(&mut rng, cfg, 2);
    let batch: Vec<Example<'_>> = pairs
        .iter()
        .map(|p| Example {
            source: &p.source,
            target: &p.target,
            features: p.image.map(|i| &feats[i]),
        })
        .collect();
    let noise: Vec<Vec<f64>> = (0..batch.len())
        .map(|_| (0..cfg.d_z).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let mut g = Graph::new();
    let loss = model::batch_loss(&mut g, &ps, cfg, &batch, &noise, cfg.variant.default_decay_c())?;
    check_gradient(&mut g, loss, GRAD_STEP)
}

/// Analytic KL next to a Monte Carlo estimate of `E_q[log q - log p]`.
#[derive(Clone, Debug)]
pub struct KlCheck {
    pub analytic: f64,
    pub estimate: f64,
    pub std_err: f64,
}

impl KlCheck {
    /// Distance between estimate and analytic value in standard errors.
    pub fn z_score(&self) -> f64 {
        (self.estimate - self.analytic).abs() / self.std_err
    }
}

pub fn random_gaussian(rng: &mut impl Rng, dim: usize) -> GaussianDiag {
    let mu = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
    let lv = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    GaussianDiag::new(mu, lv).expect("finite")
}

pub fn kl_monte_carlo(q: &GaussianDiag, p: &GaussianDiag, samples: usize, rng: &mut impl Rng) -> Result<KlCheck> {
    let analytic = q.kl(p)?;
    let sigma = q.sigma();
    let mut z = vec![0.0; q.dim()];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        for (k, zk) in z.iter_mut().enumerate() {
            let e: f64 = StandardNormal.sample(rng);
            *zk = q.mu[k] + sigma[k] * e;
        }
        let v = q.log_density(&z) - p.log_density(&z);
        sum += v;
        sum_sq += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean) * n / (n - 1.0);
    Ok(KlCheck {
        analytic,
        estimate: mean,
        std_err: (var / n).sqrt(),
    })
}
