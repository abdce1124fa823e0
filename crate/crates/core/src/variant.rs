use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// How image features enter the semantic representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FusionVariant {
    /// Affine projection of the whole-image feature (row 0).
    Global,
    /// Mean of the projected global and object features.
    ObjectsAvg,
    /// Bidirectional GRU over the projected features, mean-pooled.
    ObjectsRnn,
    /// Projected features prefixed to the source and target sequences.
    ObjectsTxt,
}

/// Model family member: the attention baseline, the text-only variational
/// model, or one of the four image-fusion models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Nmt,
    Vnmt,
    Fused(FusionVariant),
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Nmt,
        Variant::Vnmt,
        Variant::Fused(FusionVariant::Global),
        Variant::Fused(FusionVariant::ObjectsAvg),
        Variant::Fused(FusionVariant::ObjectsRnn),
        Variant::Fused(FusionVariant::ObjectsTxt),
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Variant::Nmt => "nmt",
            Variant::Vnmt => "vnmt",
            Variant::Fused(FusionVariant::Global) => "g",
            Variant::Fused(FusionVariant::ObjectsAvg) => "g-o-avg",
            Variant::Fused(FusionVariant::ObjectsRnn) => "g-o-rnn",
            Variant::Fused(FusionVariant::ObjectsTxt) => "g-o-txt",
        }
    }

    pub fn is_variational(self) -> bool {
        !matches!(self, Variant::Nmt)
    }

    pub fn fusion(self) -> Option<FusionVariant> {
        match self {
            Variant::Fused(f) => Some(f),
            _ => None,
        }
    }

    pub fn uses_image(self) -> bool {
        self.fusion().is_some()
    }

    /// Whether the semantic representation carries a separate image block.
    pub fn has_image_block(self) -> bool {
        matches!(self.fusion(), Some(f) if f != FusionVariant::ObjectsTxt)
    }

    /// L2 weight used when none is configured.
    pub fn default_decay_c(self) -> f64 {
        match self {
            Variant::Nmt | Variant::Fused(FusionVariant::Global) => 0.001,
            _ => 0.0005,
        }
    }

    /// Image embedding width used when none is configured.
    pub fn default_dim_pic(self) -> usize {
        match self {
            Variant::Fused(FusionVariant::Global) => 512,
            _ => 256,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown variant `{s}` (expected one of nmt, vnmt, g, g-o-avg, g-o-rnn, g-o-txt)"
                ))
            })
    }
}
