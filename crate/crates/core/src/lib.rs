//! Road-network graph extraction from per-pixel probability masks.
//!
//! The pipeline turns two-channel road/intersection probability masks and
//! dense feature maps into vectorized road graphs:
//!
//! 1. [`nms`] decimates probability peaks into graph vertices, giving
//!    intersection peaks priority over road peaks.
//! 2. [`toponet`] scores candidate edges between nearby vertices with a
//!    small transformer decoder trained by teacher forcing ([`labelgen`]).
//! 3. [`inference`] fuses overlapping sliding windows ([`raster`]) and
//!    averages per-window edge votes into one global graph.
//! 4. [`metrics`] evaluates predicted graphs against ground truth with
//!    TOPO and APLS.
//! 5. [`synth`] generates seeded synthetic scenes, noisy masks, and an
//!    analytic feature encoder so the whole loop runs without a learned
//!    image backbone.
//!
//! All numeric kernels are generic over a [`Scalar`] (`f32` or `f64`);
//! the aliases below pin the concrete types used by the CLI: `f64` for
//! geometry and metrics, `f32` for tensors as stored on disk.

pub mod config;
pub mod error;
pub mod geom;
pub mod graph;
// WIP probe: inference, labelgen, metrics, synth land next.
pub mod mask;
pub mod nms;
pub mod raster;
pub mod scalar;
pub mod tensor;
pub mod toponet;

pub use config::{ExtractionConfig, WindowGrid};
pub use error::{Error, Result};
pub use geom::Point;
pub use graph::RoadGraph;
pub use mask::{FeatureMap, ProbMask};
pub use scalar::Scalar;
pub use tensor::Tensor;
pub use toponet::{TopoNetParams, TopoSample};

/// Decoder parameters at training precision.
pub type TopoNetParams32 = TopoNetParams<f32>;
/// Decoder parameters at gradient-check precision.
pub type TopoNetParams64 = TopoNetParams<f64>;

/// Graph geometry as used by extraction, metrics, and the CLI.
pub type RoadGraph64 = RoadGraph<f64>;
/// Point in continuous pixel coordinates.
pub type Point64 = Point<f64>;
/// Tensor with the on-disk element type.
pub type Tensor32 = Tensor<f32>;
/// Tensor widened for geometry-side consumers.
pub type Tensor64 = Tensor<f64>;
/// Probability mask as stored in tensor files.
pub type ProbMask32 = ProbMask<f32>;
/// Probability mask widened for extraction.
pub type ProbMask64 = ProbMask<f64>;
/// Feature map as stored in tensor files and consumed by training.
pub type FeatureMap32 = FeatureMap<f32>;
/// Feature map widened for double-precision gradient checks.
pub type FeatureMap64 = FeatureMap<f64>;
