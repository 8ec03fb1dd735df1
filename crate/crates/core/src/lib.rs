//! Multi-class linear-disturbance segmentation of 4-band satellite imagery.
//!
//! The crate covers the whole pipeline: vector-to-raster label generation and
//! tiling ([`geodata`]), a procedural scene generator ([`synth`]), a dense
//! numerical core with analytic gradients ([`nn`]), the VGG16 encoder /
//! summation-skip decoder network ([`model`]), the weighted cross-entropy +
//! weighted Jaccard objective ([`loss`]), the training protocol ([`train`]),
//! and evaluation metrics ([`metrics`]).
//!
//! The numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision used for training and for gradient checks.

pub mod error;
pub mod geodata;
pub mod labels;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod scalar;
pub mod seed;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use labels::{LabelMap, NUM_CLASSES};
pub use scalar::{DType, Scalar};

/// Training precision.
pub type Tensor32 = nn::Tensor<f32>;
/// Verification precision.
pub type Tensor64 = nn::Tensor<f64>;
pub type Model32 = model::SegmentationModel<f32>;
pub type Model64 = model::SegmentationModel<f64>;
