//! Rigid transforms, mesh models, point-pair features and the ADI metric.

mod adi;
mod cloud;
mod grid;
mod kabsch;
mod mesh;
mod ppf;
mod transform;

pub use adi::{adi_distance, adi_points};
pub use cloud::PointCloud;
pub use grid::PointGrid;
pub use kabsch::kabsch;
pub use mesh::{box_symmetry_group, model_diameter, MeshModel, SurfaceSamples, DEFAULT_SURFACE_SAMPLES};
pub use ppf::{build_ppf_table, compute_ppf, PpfKey, PpfQuantization, PpfRaw, PpfTable};
pub use transform::{compose, PoseRecord, RigidTransform};

pub type Vec3 = nalgebra::Vector3<f64>;
