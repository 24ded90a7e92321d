use nalgebra::Point3;
use serde::Serialize;

use super::chamfer::{center_align, centroid, chamfer_points, rms_nearest_distance, scale_factor};
use super::features::fpfh_features;
use super::kdtree::KdTree;
use super::register::{icp_refine, ransac_register};
use super::{sample_points, GeometryConfig, GeometryError, PointCloud, RigidTransform, TriMesh};

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    /// Rigid motion from the centered, unit-scale prediction onto the
    /// centered, unit-scale ground truth.
    pub transform: RigidTransform,
    /// RMS nearest-neighbour distance in unit-scale coordinates after the
    /// center, global and ICP stages.
    pub stage_residuals: [f64; 3],
    pub icp_iterations: usize,
    pub ransac_inliers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaledChamfer {
    pub scd: f64,
    /// Chamfer distance in ground-truth units.
    pub cd: f64,
    pub gt_scale: f64,
    pub pred_scale: f64,
    #[serde(skip)]
    pub alignment: AlignmentResult,
}

/// Samples both meshes with the same seed and runs [`scaled_chamfer_clouds`].
pub fn scaled_chamfer(pred: &TriMesh, gt: &TriMesh, cfg: &GeometryConfig) -> Result<ScaledChamfer, GeometryError> {
    cfg.validate()?;
    let p = sample_points(pred, cfg.n_points, cfg.seed)?;
    let q = sample_points(gt, cfg.n_points, cfg.seed)?;
    scaled_chamfer_clouds(&p, &q, cfg)
}

fn normalized(points: &[Point3<f64>], c: &Point3<f64>, s: f64) -> Vec<Point3<f64>> {
    points.iter().map(|p| Point3::from((p - c) / s)).collect()
}

/// Scale-normalized Chamfer distance after three-stage alignment.
///
/// Both clouds are centered and divided by their own scale factor, the
/// prediction is registered onto the ground truth (FPFH + RANSAC, then ICP),
/// mapped into the ground-truth frame, and the Chamfer distance there is
/// divided by the squared ground-truth scale factor.
pub fn scaled_chamfer_clouds(pred: &PointCloud, gt: &PointCloud, cfg: &GeometryConfig) -> Result<ScaledChamfer, GeometryError> {
    cfg.validate()?;
    let gt_scale = scale_factor(gt)?;
    let pred_scale = scale_factor(pred)?;
    if !(gt_scale > 0.0) || !(pred_scale > 0.0) {
        return Err(GeometryError::DegenerateScale);
    }
    let cp = centroid(&pred.points)?;
    let cq = centroid(&gt.points)?;

    let shift = center_align(pred, gt)?;
    let p_unit = normalized(&shift.apply_all(&pred.points), &cq, pred_scale);
    let q_unit = normalized(&gt.points, &cq, gt_scale);
    let q_tree = KdTree::new(&q_unit);
    let center_residual = rms_nearest_distance(&p_unit, &q_tree);

    let fp = fpfh_features(&PointCloud::new(p_unit.clone()), cfg.feature_radius, cfg.normal_neighbors)?;
    let fq = fpfh_features(&PointCloud::new(q_unit.clone()), cfg.feature_radius, cfg.normal_neighbors)?;
    let coarse = ransac_register(&p_unit, &q_unit, &fp, &fq, &cfg.ransac, cfg.seed)?;
    let global_residual = rms_nearest_distance(&coarse.transform.apply_all(&p_unit), &q_tree);

    let icp = icp_refine(&p_unit, &q_unit, &coarse.transform, &cfg.icp)?;
    let transform = icp.transform;

    let aligned: Vec<Point3<f64>> = pred
        .points
        .iter()
        .map(|p| cq + transform.apply(&Point3::from((p - cp) / pred_scale)).coords * gt_scale)
        .collect();
    let cd = chamfer_points(&aligned, &gt.points)?;
    Ok(ScaledChamfer {
        scd: cd / (gt_scale * gt_scale),
        cd,
        gt_scale,
        pred_scale,
        alignment: AlignmentResult {
            transform,
            stage_residuals: [center_residual, global_residual, icp.final_residual()],
            icp_iterations: icp.iterations,
            ransac_inliers: coarse.inliers,
        },
    })
}
