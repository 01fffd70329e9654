//! Spatiotemporal 3D-CNN engine for facial micro-expression recognition.
//!
//! The crate provides dense 4-D tensors, layer primitives with hand-written
//! backward passes, the single-stream and two-stream fusion architectures,
//! clip ingestion, an SGD trainer with checkpointing, and gradient saliency.

pub mod ablation;
pub mod dataio;
pub mod error;
pub mod models;
pub mod nn;
pub mod saliency;
pub mod tensor;
pub mod trainer;

pub use error::{Axis, Error, Result};
pub use models::{ArchKind, ArchSpec};
pub use nn::{NetworkGraph, Param};
pub use tensor::{Precision, Scalar, Shape4, Tensor};
