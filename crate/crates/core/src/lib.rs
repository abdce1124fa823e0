//! Variational multimodal neural machine translation.

pub mod data;
pub mod checks;
pub mod decoder;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod image_encoder;
pub mod inferrer;
pub mod metrics;
pub mod model;
pub mod params;
pub mod tensor;
pub mod text_encoder;
pub mod trainer;
pub mod translate;
pub mod variant;

pub use error::{Error, Result};
pub use graph::{Graph, NodeId};
pub use tensor::Tensor;
pub use variant::{FusionVariant, Variant};
