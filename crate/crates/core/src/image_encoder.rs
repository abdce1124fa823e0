//! Image feature projection and the four fusion strategies.

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::params::ParamSet;
use crate::tensor::Tensor;
use crate::text_encoder;
use crate::variant::{FusionVariant, Variant};

pub const W_PI: &str = "img.W_pi";
pub const B_PI: &str = "img.b_pi";
pub const IMAGE_ENCODER: &str = "enc_img";

/// Precomputed feature vectors for one image: row 0 is the whole image,
/// further rows are object regions.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageFeatureSet {
    vectors: Tensor,
}

impl ImageFeatureSet {
    pub fn new(vectors: Tensor) -> Result<Self> {
        if vectors.rank() != 2 {
            return Err(Error::Shape(format!(
                "image features must be a matrix, got {:?}",
                vectors.shape()
            )));
        }
        if !vectors.is_finite() {
            return Err(Error::Data("non-finite image feature".into()));
        }
        Ok(Self { vectors })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Tensor::from_rows(rows)?)
    }

    /// Number of feature rows `l`.
    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn tensor(&self) -> &Tensor {
        &self.vectors
    }

    pub fn global(&self) -> Tensor {
        Tensor::vector(self.vectors.row(0).to_vec())
    }
}

/// `W x + b`.
pub fn project_affine(g: &mut Graph, w: NodeId, b: NodeId, x: NodeId) -> Result<NodeId> {
    g.affine(w, x, b)
}

/// Projects every feature row, giving the `l x d_pi` sequence `h'_pi`.
pub fn project_rows(g: &mut Graph, ps: &ParamSet, features: &ImageFeatureSet) -> Result<NodeId> {
    let w = ps.node(g, W_PI)?;
    let b = ps.node(g, B_PI)?;
    let f = g.constant(features.tensor().clone());
    let wt = g.transpose(w)?;
    let proj = g.matmul(f, wt)?;
    g.add_row_bias(proj, b)
}

/// Variant G: affine projection of the global feature only.
pub fn encode_global(g: &mut Graph, ps: &ParamSet, features: &ImageFeatureSet) -> Result<NodeId> {
    let w = ps.node(g, W_PI)?;
    let b = ps.node(g, B_PI)?;
    let x = g.constant(features.global());
    project_affine(g, w, b, x)
}

/// Variant G+O-AVG: mean of the projected rows.
pub fn encode_avg(g: &mut Graph, ps: &ParamSet, features: &ImageFeatureSet) -> Result<NodeId> {
    let rows = project_rows(g, ps, features)?;
    g.mean_rows(rows)
}

/// Variant G+O-RNN: bidirectional GRU over the projected rows in file
/// order, mean-pooled to `d_pi`.
pub fn encode_rnn(
    g: &mut Graph,
    ps: &ParamSet,
    features: &ImageFeatureSet,
    d_pi: usize,
) -> Result<NodeId> {
    let rows = project_rows(g, ps, features)?;
    Ok(text_encoder::encode(g, ps, IMAGE_ENCODER, rows, d_pi)?.pooled)
}

/// Variant G+O-TXT: prefixes the projected rows to both embedded sequences
/// and encodes them with the text encoders. The returned `(h_f, h_g)` are
/// for the posterior only.
#[allow(clippy::too_many_arguments)]
pub fn fuse_txt(
    g: &mut Graph,
    ps: &ParamSet,
    source_embedded: NodeId,
    target_embedded: NodeId,
    features: &ImageFeatureSet,
    source_encoder: &str,
    target_encoder: &str,
    d_h: usize,
) -> Result<(NodeId, NodeId)> {
    let d_emb = g.shape(source_embedded)[1];
    let d_pi = ps.get(W_PI)?.rows();
    if d_pi != d_emb {
        return Err(Error::Config(format!(
            "g-o-txt needs dim_pic == dim_word, got {d_pi} vs {d_emb}"
        )));
    }
    let prefix = project_rows(g, ps, features)?;
    let src = g.concat_rows(&[prefix, source_embedded])?;
    let tgt = g.concat_rows(&[prefix, target_embedded])?;
    let h_f = text_encoder::encode(g, ps, source_encoder, src, d_h)?.pooled;
    let h_g = text_encoder::encode(g, ps, target_encoder, tgt, d_h)?.pooled;
    Ok((h_f, h_g))
}

/// The concatenated `h_e = [h_f ; h_g ; h_pi]`, kept as blocks so that each
/// block can meet its own slice of the inferrer weights.
#[derive(Clone, Copy, Debug)]
pub struct SemanticRepresentation {
    pub source: NodeId,
    pub target: NodeId,
    pub image: Option<NodeId>,
    pub dim: usize,
}

impl SemanticRepresentation {
    pub fn blocks(&self) -> Vec<(&'static str, NodeId)> {
        let mut b = vec![("src", self.source), ("tgt", self.target)];
        if let Some(img) = self.image {
            b.push(("img", img));
        }
        b
    }

    /// Materializes `h_e` as one vector in source, target, image order.
    pub fn concat(&self, g: &mut Graph) -> Result<NodeId> {
        let parts: Vec<NodeId> = self.blocks().into_iter().map(|(_, n)| n).collect();
        g.concat(&parts)
    }
}

pub fn build_semantic(
    g: &Graph,
    h_f: NodeId,
    h_g: NodeId,
    h_pi: Option<NodeId>,
    variant: Variant,
) -> Result<SemanticRepresentation> {
    let wants_image = variant.has_image_block();
    if !variant.is_variational() {
        return Err(Error::Contract("the nmt variant has no semantic representation".into()));
    }
    if wants_image != h_pi.is_some() {
        return Err(Error::Contract(format!(
            "variant {variant} {} an image block",
            if wants_image { "requires" } else { "does not take" }
        )));
    }
    let len = |n: NodeId| g.shape(n)[0];
    let d_h = len(h_f);
    if len(h_g) != d_h {
        return Err(Error::dim("build_semantic", g.shape(h_f), g.shape(h_g)));
    }
    let dim = 2 * d_h + h_pi.map_or(0, len);
    Ok(SemanticRepresentation {
        source: h_f,
        target: h_g,
        image: h_pi,
        dim,
    })
}

/// Image block for the variants that have one.
pub fn image_block(
    g: &mut Graph,
    ps: &ParamSet,
    fusion: FusionVariant,
    features: &ImageFeatureSet,
    d_pi: usize,
) -> Result<Option<NodeId>> {
    Ok(match fusion {
        FusionVariant::Global => Some(encode_global(g, ps, features)?),
        FusionVariant::ObjectsAvg => Some(encode_avg(g, ps, features)?),
        FusionVariant::ObjectsRnn => Some(encode_rnn(g, ps, features, d_pi)?),
        FusionVariant::ObjectsTxt => None,
    })
}
