//! Multi-instance 6D object pose estimation from depth and per-pixel
//! semantic/boundary probability maps.
//!
//! The pipeline has four stages:
//!
//! 1. [`hypgen`] samples 4-point bases that stay within a single object
//!    instance (boundary-constrained pixel graph + point-pair features),
//!    matches them to congruent sets on the object model, deduplicates
//!    under the model's symmetry group and refines with ICP.
//! 2. [`scoring`] renders every hypothesis, computes five alignment
//!    features and maps them to a predicted ADI error with a
//!    gradient-boosted tree ensemble.
//! 3. [`select`] builds the volumetric conflict set and solves the
//!    capacity-constrained maximum-weight independent set exactly.
//! 4. [`eval`] measures ADI recall against ground truth.
//!
//! [`scenegen`] provides synthetic packed and pile scenes with simulated
//! prediction maps, and [`pipeline`] wires the stages together.

pub mod config;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod hypgen;
pub mod io;
pub mod pipeline;
pub mod render;
pub mod scenegen;
pub mod scoring;
pub mod select;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use geometry::{MeshModel, PointCloud, RigidTransform, Vec3};
pub use render::{CameraIntrinsics, DepthImage, Image, Mask};
pub use scenegen::{GroundTruthScene, PredictionMaps, SceneSpec};
