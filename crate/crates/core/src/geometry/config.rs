use serde::{Deserialize, Serialize};

use super::{GeometryError, RewardThresholds};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacParams {
    pub max_iterations: usize,
    pub confidence: f64,
    /// Inlier distance in unit-scale coordinates.
    pub inlier_threshold: f64,
    /// Minimum ratio of corresponding edge lengths in a sampled triple.
    pub edge_length_ratio: f64,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            max_iterations: 100_000,
            confidence: 0.999,
            inlier_threshold: 0.05,
            edge_length_ratio: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpParams {
    pub max_iterations: usize,
    pub relative_tolerance: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        IcpParams {
            max_iterations: 100,
            relative_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub n_points: usize,
    pub seed: u64,
    pub thresholds: RewardThresholds,
    /// FPFH neighbourhood radius in unit-scale coordinates.
    pub feature_radius: f64,
    pub normal_neighbors: usize,
    pub ransac: RansacParams,
    pub icp: IcpParams,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            n_points: 2048,
            seed: 0,
            thresholds: RewardThresholds::default(),
            feature_radius: 0.25,
            normal_neighbors: 30,
            ransac: RansacParams::default(),
            icp: IcpParams::default(),
        }
    }
}

fn invalid(msg: String) -> GeometryError {
    GeometryError::InvalidConfig(msg)
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<(), GeometryError> {
        self.thresholds.validate()?;
        if self.n_points < super::features::MIN_FEATURE_POINTS {
            return Err(invalid(format!("n_points must be at least 10, got {}", self.n_points)));
        }
        if !(self.feature_radius > 0.0 && self.feature_radius.is_finite()) {
            return Err(invalid(format!("feature_radius must be positive, got {}", self.feature_radius)));
        }
        if self.normal_neighbors < 3 {
            return Err(invalid(format!("normal_neighbors must be at least 3, got {}", self.normal_neighbors)));
        }
        let r = &self.ransac;
        if r.max_iterations == 0 {
            return Err(invalid("ransac.max_iterations must be positive".into()));
        }
        if !(r.confidence > 0.0 && r.confidence < 1.0) {
            return Err(invalid(format!("ransac.confidence must be in (0, 1), got {}", r.confidence)));
        }
        if !(r.inlier_threshold > 0.0 && r.inlier_threshold.is_finite()) {
            return Err(invalid(format!("ransac.inlier_threshold must be positive, got {}", r.inlier_threshold)));
        }
        if !(r.edge_length_ratio >= 0.0 && r.edge_length_ratio <= 1.0) {
            return Err(invalid(format!("ransac.edge_length_ratio must be in [0, 1], got {}", r.edge_length_ratio)));
        }
        if !(self.icp.relative_tolerance >= 0.0 && self.icp.relative_tolerance.is_finite()) {
            return Err(invalid(format!(
                "icp.relative_tolerance must be non-negative, got {}",
                self.icp.relative_tolerance
            )));
        }
        Ok(())
    }
}
