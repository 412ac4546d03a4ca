//! Oriented small-object detection toolkit.
//!
//! Rotated-box geometry, oriented anchors, an image-pyramid feature stream
//! fused into a single-shot backbone, an oriented region proposal head with
//! rotation pooling, DOTA-style data handling and VOC-style mAP evaluation.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below name the common instantiations.

pub mod anchors;
pub mod backbone;
pub mod cli;
pub mod config;
pub mod dataio;
pub mod eval;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod head;
pub mod oracle;
pub mod pipeline;
pub mod pooling;
pub mod pyramid;
pub mod rpn;
pub mod scalar;
pub mod selfcheck;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use geometry::{HorizontalBox, Point, RotatedBox};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type RotatedBox32 = RotatedBox<f32>;
pub type RotatedBox64 = RotatedBox<f64>;
