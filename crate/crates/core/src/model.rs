//! Full model assembly: parameter layout per variant, the per-sentence
//! training terms, and the translation-time encoding.

use rand::Rng;

use crate::decoder::{self, DecoderOptions, LatentInjection, SourceContext, TARGET_EMBEDDING};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::image_encoder::{self, ImageFeatureSet, B_PI, IMAGE_ENCODER, W_PI};
use crate::inferrer::{self, GaussianNodes};
use crate::params::{ParamSet, ParamSpec};
use crate::text_encoder;
use crate::variant::{FusionVariant, Variant};

pub const SOURCE_EMBEDDING: &str = "src_emb";
pub const SOURCE_ENCODER: &str = "enc_src";
pub const TARGET_ENCODER: &str = "enc_tgt";

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub d_h: usize,
    pub d_emb: usize,
    pub d_z: usize,
    pub d_pi: usize,
    pub d_fc7: usize,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub gate_fix: bool,
    /// Feed `h_z` straight into the decoder's V matrices instead of `h'_e`.
    pub latent_bypass: bool,
}

impl ModelConfig {
    /// Table-4 sized model for the given vocabularies.
    pub fn new(variant: Variant, src_vocab: usize, tgt_vocab: usize) -> Self {
        Self {
            variant,
            d_h: 256,
            d_emb: 256,
            d_z: 256,
            d_pi: variant.default_dim_pic(),
            d_fc7: 4096,
            src_vocab,
            tgt_vocab,
            gate_fix: false,
            latent_bypass: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("dim", self.d_h),
            ("dim_word", self.d_emb),
            ("dimv", self.d_z),
            ("dim_pic", self.d_pi),
            ("dim_fc7", self.d_fc7),
            ("source vocabulary", self.src_vocab),
            ("target vocabulary", self.tgt_vocab),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.d_h % 2 != 0 {
            return Err(Error::Config(format!("dim must be even, got {}", self.d_h)));
        }
        match self.variant.fusion() {
            Some(FusionVariant::ObjectsTxt) if self.d_pi != self.d_emb => Err(Error::Config(format!(
                "g-o-txt needs dim_pic == dim_word, got {} vs {}",
                self.d_pi, self.d_emb
            ))),
            Some(FusionVariant::ObjectsRnn) if self.d_pi % 2 != 0 => Err(Error::Config(format!(
                "g-o-rnn needs an even dim_pic, got {}",
                self.d_pi
            ))),
            _ => Ok(()),
        }
    }

    pub fn decoder_options(&self) -> DecoderOptions {
        DecoderOptions {
            gate_fix: self.gate_fix,
        }
    }

    /// Components of `h_e` with their widths; empty for the baseline.
    pub fn semantic_blocks(&self) -> Vec<(&'static str, usize)> {
        if !self.variant.is_variational() {
            return Vec::new();
        }
        let mut b = vec![("src", self.d_h), ("tgt", self.d_h)];
        if self.variant.has_image_block() {
            b.push(("img", self.d_pi));
        }
        b
    }

    /// Inputs of the decoder's latent injection.
    pub fn latent_blocks(&self) -> Vec<(&'static str, usize)> {
        if !self.variant.is_variational() {
            Vec::new()
        } else if self.latent_bypass {
            vec![("z", self.d_z)]
        } else {
            self.semantic_blocks()
        }
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut specs = vec![
            ParamSpec::weight(SOURCE_EMBEDDING, &[self.d_emb, self.src_vocab]),
            ParamSpec::weight(TARGET_EMBEDDING, &[self.d_emb, self.tgt_vocab]),
        ];
        specs.extend(text_encoder::bigru_specs(SOURCE_ENCODER, self.d_emb, self.d_h));
        if self.variant.is_variational() {
            specs.extend(text_encoder::bigru_specs(TARGET_ENCODER, self.d_emb, self.d_h));
        }
        if self.variant.uses_image() {
            specs.push(ParamSpec::weight(W_PI, &[self.d_pi, self.d_fc7]));
            specs.push(ParamSpec::bias(B_PI, self.d_pi));
        }
        if self.variant.fusion() == Some(FusionVariant::ObjectsRnn) {
            specs.extend(text_encoder::bigru_specs(IMAGE_ENCODER, self.d_pi, self.d_pi));
        }
        if self.variant.is_variational() {
            let blocks = self.semantic_blocks();
            specs.extend(inferrer::prior_specs(self.d_h, self.d_z));
            specs.extend(inferrer::posterior_specs(&blocks, self.d_z));
            if !self.latent_bypass {
                specs.extend(inferrer::projection_specs(&blocks, self.d_z));
            }
        }
        specs.extend(decoder::decoder_specs(
            self.d_h,
            self.d_emb,
            self.tgt_vocab,
            &self.latent_blocks(),
        ));
        specs
    }

    pub fn init_params<R: Rng + ?Sized>(&self, std: f64, rng: &mut R) -> ParamSet {
        ParamSet::init(&self.param_specs(), std, rng)
    }
}

/// One aligned training pair.
#[derive(Clone, Copy, Debug)]
pub struct Example<'a> {
    pub source: &'a [u32],
    pub target: &'a [u32],
    pub features: Option<&'a ImageFeatureSet>,
}

/// Graph nodes of one sentence's contribution to the objective.
#[derive(Clone, Debug)]
pub struct SentenceTerms {
    pub log_likelihood: NodeId,
    /// `KL(q || p)`; absent for the baseline.
    pub kl: Option<NodeId>,
    pub posterior: Option<GaussianNodes>,
    pub prior: Option<GaussianNodes>,
    pub source: SourceContext,
    pub steps: Vec<decoder::StepOutput>,
    pub epsilon: Vec<f64>,
}

impl SentenceTerms {
    /// `KL - log p(y | z, x)`.
    pub fn loss(&self, g: &mut Graph) -> Result<NodeId> {
        let nll = g.neg(self.log_likelihood)?;
        match self.kl {
            Some(kl) => g.add(kl, nll),
            None => Ok(nll),
        }
    }
}

fn encode_source(g: &mut Graph, ps: &ParamSet, cfg: &ModelConfig, source: &[u32]) -> Result<(NodeId, SourceContext)> {
    let table = ps.node(g, SOURCE_EMBEDDING)?;
    let emb = text_encoder::embed(g, table, source)?;
    let enc = text_encoder::encode(g, ps, SOURCE_ENCODER, emb, cfg.d_h)?;
    Ok((emb, SourceContext::new(g, ps, enc)?))
}

/// Decoder-side terms `V h'_e`, `V_r h'_e`, `V_o h'_e` for a latent sample.
pub fn injection(
    g: &mut Graph,
    ps: &ParamSet,
    cfg: &ModelConfig,
    sample: &inferrer::LatentSample,
) -> Result<LatentInjection> {
    let inputs = if cfg.latent_bypass {
        vec![("z", sample.h_z)]
    } else {
        inferrer::project_to_target(g, ps, sample, &cfg.semantic_blocks())?
    };
    decoder::latent_injection(g, ps, &inputs)
}

/// Builds the training terms of one sentence with the given noise draw
/// (ignored by the baseline).
pub fn sentence_terms(
    g: &mut Graph,
    ps: &ParamSet,
    cfg: &ModelConfig,
    ex: &Example<'_>,
    epsilon: &[f64],
) -> Result<SentenceTerms> {
    let (src_emb, source) = encode_source(g, ps, cfg, ex.source)?;
    let opts = cfg.decoder_options();
    if !cfg.variant.is_variational() {
        let tf = decoder::decode_teacher_forced(g, ps, opts, &source, None, ex.target)?;
        return Ok(SentenceTerms {
            log_likelihood: tf.log_likelihood,
            kl: None,
            posterior: None,
            prior: None,
            source,
            steps: tf.steps,
            epsilon: Vec::new(),
        });
    }

    let tgt_table = ps.node(g, TARGET_EMBEDDING)?;
    let tgt_emb = text_encoder::embed(g, tgt_table, ex.target)?;
    let features = match (cfg.variant.fusion(), ex.features) {
        (Some(_), None) => {
            return Err(Error::Data(format!("variant {} needs image features", cfg.variant)))
        }
        (_, f) => f,
    };
    let (h_f, h_g) = match (cfg.variant.fusion(), features) {
        (Some(FusionVariant::ObjectsTxt), Some(f)) => image_encoder::fuse_txt(
            g,
            ps,
            src_emb,
            tgt_emb,
            f,
            SOURCE_ENCODER,
            TARGET_ENCODER,
            cfg.d_h,
        )?,
        _ => {
            let h_g = text_encoder::encode(g, ps, TARGET_ENCODER, tgt_emb, cfg.d_h)?.pooled;
            (source.pooled, h_g)
        }
    };
    let h_pi = match (cfg.variant.fusion(), features) {
        (Some(fusion), Some(f)) => image_encoder::image_block(g, ps, fusion, f, cfg.d_pi)?,
        _ => None,
    };
    let semantic = image_encoder::build_semantic(g, h_f, h_g, h_pi, cfg.variant)?;
    let posterior = inferrer::posterior_params(g, ps, &semantic)?;
    let prior = inferrer::prior_params(g, ps, source.pooled)?;
    let kl = inferrer::kl_divergence(g, &posterior, &prior)?;
    let sample = inferrer::reparameterize(g, &posterior, epsilon)?;
    let inj = injection(g, ps, cfg, &sample)?;
    let tf = decoder::decode_teacher_forced(g, ps, opts, &source, Some(&inj), ex.target)?;
    Ok(SentenceTerms {
        log_likelihood: tf.log_likelihood,
        kl: Some(kl),
        posterior: Some(posterior),
        prior: Some(prior),
        source,
        steps: tf.steps,
        epsilon: sample.epsilon,
    })
}

/// `decay_c · Σ ‖W‖²` over every parameter.
pub fn l2_penalty(g: &mut Graph, ps: &ParamSet, decay_c: f64) -> Result<NodeId> {
    let mut terms = Vec::with_capacity(ps.len());
    for name in ps.names() {
        let p = ps.node(g, name)?;
        let sq = g.square(p)?;
        terms.push(g.sum(sq)?);
    }
    let total = g.add_all(&terms)?;
    g.scale(total, decay_c)
}

/// Mean sentence loss over the batch plus the L2 penalty.
pub fn batch_loss(
    g: &mut Graph,
    ps: &ParamSet,
    cfg: &ModelConfig,
    batch: &[Example<'_>],
    epsilons: &[Vec<f64>],
    decay_c: f64,
) -> Result<NodeId> {
    if batch.is_empty() || batch.len() != epsilons.len() {
        return Err(Error::Contract(format!(
            "batch of {} sentences with {} noise draws",
            batch.len(),
            epsilons.len()
        )));
    }
    let mut losses = Vec::with_capacity(batch.len());
    for (ex, eps) in batch.iter().zip(epsilons) {
        let terms = sentence_terms(g, ps, cfg, ex, eps)?;
        losses.push(terms.loss(g)?);
    }
    let total = g.add_all(&losses)?;
    let mean = g.scale(total, 1.0 / batch.len() as f64)?;
    if decay_c == 0.0 {
        return Ok(mean);
    }
    let l2 = l2_penalty(g, ps, decay_c)?;
    g.add(mean, l2)
}

/// Everything the decoder needs at translation time.
#[derive(Clone, Debug)]
pub struct TranslationInput {
    pub source: SourceContext,
    pub latent: Option<LatentInjection>,
    pub prior: Option<GaussianNodes>,
}

/// Source encoding with the latent set to the prior mean. Image features
/// and the posterior are not involved.
pub fn encode_for_translation(
    g: &mut Graph,
    ps: &ParamSet,
    cfg: &ModelConfig,
    source: &[u32],
) -> Result<TranslationInput> {
    let (_, src) = encode_source(g, ps, cfg, source)?;
    if !cfg.variant.is_variational() {
        return Ok(TranslationInput {
            source: src,
            latent: None,
            prior: None,
        });
    }
    let prior = inferrer::prior_params(g, ps, src.pooled)?;
    let sample = inferrer::latent_for_translation(g, &prior);
    let inj = injection(g, ps, cfg, &sample)?;
    Ok(TranslationInput {
        source: src,
        latent: Some(inj),
        prior: Some(prior),
    })
}
