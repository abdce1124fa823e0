//! Diagonal-Gaussian posterior and prior over the latent semantics, their
//! KL divergence, reparameterized sampling and the projection of the
//! latent into the decoder's space.
//!
//! The posterior's first layer `W_z1 h_e` is stored as one weight block per
//! component of `h_e` (`post.W_z1.src`, `.tgt`, `.img`), and the target
//! projection likewise as one row block per component. Both are exactly the
//! single-matrix forms split by columns/rows; the split lets a model with an
//! image block be fine-tuned from a text-only one by parameter name.

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::image_encoder::SemanticRepresentation;
use crate::params::{ParamSet, ParamSpec};
use crate::tensor::Tensor;

pub const LOG_VAR_MIN: f64 = -8.0;
pub const LOG_VAR_MAX: f64 = 8.0;

/// Concrete diagonal Gaussian; `log_var` holds `log σ²`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianDiag {
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl GaussianDiag {
    /// Builds a Gaussian, clamping `log_var` to the supported range.
    pub fn new(mu: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        if mu.len() != log_var.len() || mu.is_empty() {
            return Err(Error::Shape(format!(
                "mean has {} entries, log-variance {}",
                mu.len(),
                log_var.len()
            )));
        }
        let log_var = log_var.into_iter().map(|v| v.clamp(LOG_VAR_MIN, LOG_VAR_MAX)).collect();
        Ok(Self { mu, log_var })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mu: vec![0.0; dim],
            log_var: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.log_var.iter().map(|v| (0.5 * v).exp()).collect()
    }

    /// `KL(self || other)`, evaluated through the same graph code as training.
    pub fn kl(&self, other: &GaussianDiag) -> Result<f64> {
        let mut g = Graph::new();
        let q = self.to_nodes(&mut g);
        let p = other.to_nodes(&mut g);
        let kl = kl_divergence(&mut g, &q, &p)?;
        Ok(g.value(kl).item())
    }

    /// Log density at `z`.
    pub fn log_density(&self, z: &[f64]) -> f64 {
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        self.mu
            .iter()
            .zip(&self.log_var)
            .zip(z)
            .map(|((m, lv), x)| -0.5 * (ln_2pi + lv + (x - m).powi(2) * (-lv).exp()))
            .sum()
    }

    pub fn to_nodes(&self, g: &mut Graph) -> GaussianNodes {
        GaussianNodes {
            mu: g.constant(Tensor::vector(self.mu.clone())),
            log_var: g.constant(Tensor::vector(self.log_var.clone())),
        }
    }
}

/// A Gaussian whose parameters live on a graph.
#[derive(Clone, Copy, Debug)]
pub struct GaussianNodes {
    pub mu: NodeId,
    pub log_var: NodeId,
}

impl GaussianNodes {
    pub fn values(&self, g: &Graph) -> GaussianDiag {
        GaussianDiag {
            mu: g.value(self.mu).data().to_vec(),
            log_var: g.value(self.log_var).data().to_vec(),
        }
    }
}

/// Reparameterized draw; `epsilon` is recorded for reproducibility.
#[derive(Clone, Debug)]
pub struct LatentSample {
    pub h_z: NodeId,
    pub epsilon: Vec<f64>,
}

/// `(block name, width)` of each component of `h_e`.
pub type Blocks = Vec<(&'static str, usize)>;

pub fn posterior_specs(blocks: &[(&'static str, usize)], d_z: usize) -> Vec<ParamSpec> {
    let mut specs: Vec<ParamSpec> = blocks
        .iter()
        .map(|(name, width)| ParamSpec::weight(format!("post.W_z1.{name}"), &[d_z, *width]))
        .collect();
    specs.extend(head_specs("post", d_z));
    specs
}

pub fn prior_specs(d_h: usize, d_z: usize) -> Vec<ParamSpec> {
    let mut specs = vec![ParamSpec::weight("prior.W_z1", &[d_z, d_h])];
    specs.extend(head_specs("prior", d_z));
    specs
}

fn head_specs(prefix: &str, d_z: usize) -> Vec<ParamSpec> {
    vec![
        ParamSpec::bias(format!("{prefix}.b_z1"), d_z),
        ParamSpec::weight(format!("{prefix}.W_mu"), &[d_z, d_z]),
        ParamSpec::bias(format!("{prefix}.b_mu"), d_z),
        ParamSpec::weight(format!("{prefix}.W_sigma"), &[d_z, d_z]),
        ParamSpec::bias(format!("{prefix}.b_sigma"), d_z),
    ]
}

/// Specs of the latent-to-target projection, one row block per component.
pub fn projection_specs(blocks: &[(&'static str, usize)], d_z: usize) -> Vec<ParamSpec> {
    blocks
        .iter()
        .flat_map(|(name, width)| {
            [
                ParamSpec::weight(format!("latent.W_z2.{name}"), &[*width, d_z]),
                ParamSpec::bias(format!("latent.b_z2.{name}"), *width),
            ]
        })
        .collect()
}

/// `μ = W_μ h_z + b_μ`, `log σ² = clamp(W_σ h_z + b_σ)`.
fn gaussian_head(g: &mut Graph, ps: &ParamSet, prefix: &str, h_z: NodeId) -> Result<GaussianNodes> {
    let w_mu = ps.node(g, &format!("{prefix}.W_mu"))?;
    let b_mu = ps.node(g, &format!("{prefix}.b_mu"))?;
    let w_s = ps.node(g, &format!("{prefix}.W_sigma"))?;
    let b_s = ps.node(g, &format!("{prefix}.b_sigma"))?;
    let mu = g.affine(w_mu, h_z, b_mu)?;
    let raw = g.affine(w_s, h_z, b_s)?;
    let log_var = g.clamp(raw, LOG_VAR_MIN, LOG_VAR_MAX)?;
    Ok(GaussianNodes { mu, log_var })
}

/// Approximate posterior `q(z | x, y, π)` from the semantic representation:
/// `h_z = tanh(W_z1 h_e + b_z1)` followed by the Gaussian head.
pub fn posterior_params(
    g: &mut Graph,
    ps: &ParamSet,
    h_e: &SemanticRepresentation,
) -> Result<GaussianNodes> {
    let mut terms = Vec::new();
    for (name, block) in h_e.blocks() {
        let w = ps.node(g, &format!("post.W_z1.{name}"))?;
        terms.push(g.matmul(w, block)?);
    }
    let b = ps.node(g, "post.b_z1")?;
    terms.push(b);
    let pre = g.add_all(&terms)?;
    let h_z = g.tanh(pre)?;
    gaussian_head(g, ps, "post", h_z)
}

/// Prior `p(z | x)` from the pooled source representation alone.
pub fn prior_params(g: &mut Graph, ps: &ParamSet, h_f: NodeId) -> Result<GaussianNodes> {
    let w = ps.node(g, "prior.W_z1")?;
    let b = ps.node(g, "prior.b_z1")?;
    let pre = g.affine(w, h_f, b)?;
    let h_z = g.tanh(pre)?;
    gaussian_head(g, ps, "prior", h_z)
}

/// Closed-form `KL(q || p)` between diagonal Gaussians, summed over
/// dimensions. Written as `½(expm1(d) - d) + ½ Δμ² e^{-log σ'²}` with
/// `d = log σ² - log σ'²`, which is the usual expression rearranged so that
/// identical arguments give exactly zero.
pub fn kl_divergence(g: &mut Graph, q: &GaussianNodes, p: &GaussianNodes) -> Result<NodeId> {
    if g.shape(q.mu) != g.shape(p.mu) {
        return Err(Error::dim("kl_divergence", g.shape(q.mu), g.shape(p.mu)));
    }
    let d = g.sub(q.log_var, p.log_var)?;
    let em1 = g.expm1(d)?;
    let var_term = g.sub(em1, d)?;
    let dmu = g.sub(q.mu, p.mu)?;
    let dmu2 = g.square(dmu)?;
    let neg_lvp = g.neg(p.log_var)?;
    let inv_var_p = g.exp(neg_lvp)?;
    let mean_term = g.mul(dmu2, inv_var_p)?;
    let total = g.add(var_term, mean_term)?;
    let half = g.scale(total, 0.5)?;
    g.sum(half)
}

/// `h_z = μ + exp(log σ² / 2) ⊙ ε`; `ε` enters as a constant.
pub fn reparameterize(g: &mut Graph, q: &GaussianNodes, epsilon: &[f64]) -> Result<LatentSample> {
    let d_z = g.shape(q.mu)[0];
    if epsilon.len() != d_z {
        return Err(Error::dim("reparameterize", g.shape(q.mu), &[epsilon.len()]));
    }
    let half = g.scale(q.log_var, 0.5)?;
    let sigma = g.exp(half)?;
    let eps = g.constant(Tensor::vector(epsilon.to_vec()));
    let noise = g.mul(sigma, eps)?;
    let h_z = g.add(q.mu, noise)?;
    Ok(LatentSample {
        h_z,
        epsilon: epsilon.to_vec(),
    })
}

/// Translation-time latent: the prior mean itself.
pub fn latent_for_translation(g: &Graph, p: &GaussianNodes) -> LatentSample {
    LatentSample {
        h_z: p.mu,
        epsilon: vec![0.0; g.shape(p.mu)[0]],
    }
}

/// `h'_e = tanh(W_z2 h_z + b_z2)`, returned per block.
pub fn project_to_target(
    g: &mut Graph,
    ps: &ParamSet,
    sample: &LatentSample,
    blocks: &[(&'static str, usize)],
) -> Result<Vec<(&'static str, NodeId)>> {
    let mut out = Vec::with_capacity(blocks.len());
    for (name, _) in blocks {
        let w = ps.node(g, &format!("latent.W_z2.{name}"))?;
        let b = ps.node(g, &format!("latent.b_z2.{name}"))?;
        let pre = g.affine(w, sample.h_z, b)?;
        out.push((*name, g.tanh(pre)?));
    }
    Ok(out)
}
