//! Geometric fidelity metrics for generated CAD models.
//!
//! Meshes are sampled into point clouds, aligned in three stages (centroids,
//! FPFH feature matching with RANSAC, point-to-point ICP) and compared with the
//! bidirectional Chamfer distance, normalized by the squared scale of the
//! ground truth.

mod chamfer;
mod config;
mod features;
mod kdtree;
mod mesh;
mod pipeline;
mod register;
mod reward;
pub mod shapes;
mod transform;

use thiserror::Error;

pub use chamfer::{center_align, centroid, chamfer, rms_nearest_distance, scale_factor};
pub use config::{GeometryConfig, IcpParams, RansacParams};
pub use features::{estimate_normals, fpfh_features, FpfhFeatures, FPFH_BINS};
pub use kdtree::KdTree;
pub use mesh::{load_stl, sample_points, write_stl_ascii, write_stl_binary, PointCloud, TriMesh};
pub use pipeline::{scaled_chamfer, scaled_chamfer_clouds, AlignmentResult, ScaledChamfer};
pub use register::{icp_refine, kabsch, ransac_register, IcpResult, RansacResult};
pub use reward::{geometric_reward, RewardThresholds};
pub use transform::RigidTransform;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("malformed STL: {0}")]
    MalformedStl(String),
    #[error("mesh has no triangles")]
    EmptyMesh,
    #[error("mesh has zero total surface area")]
    DegenerateMesh,
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("need at least {required} points, got {found}")]
    TooFewPoints { found: usize, required: usize },
    #[error("registration failed: {0}")]
    RegistrationFailed(String),
    #[error("ground-truth scale factor is zero")]
    DegenerateScale,
    #[error("invalid reward thresholds: need 0 <= low ({low}) < high ({high})")]
    InvalidThresholds { low: f64, high: f64 },
    #[error("invalid scaled Chamfer distance {0}")]
    InvalidDistance(f64),
    #[error("invalid geometry config: {0}")]
    InvalidConfig(String),
}
