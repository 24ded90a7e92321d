use nalgebra::{Matrix3, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::chamfer::nearest_sq_distances;
use super::config::{IcpParams, RansacParams};
use super::features::FpfhFeatures;
use super::kdtree::KdTree;
use super::{GeometryError, RigidTransform};

/// Least-squares rigid transform mapping `src[i]` onto `dst[i]` (Kabsch with
/// reflection correction). `None` for fewer than one pair.
pub fn kabsch(src: &[Point3<f64>], dst: &[Point3<f64>]) -> Option<RigidTransform> {
    let n = src.len().min(dst.len());
    if n == 0 {
        return None;
    }
    let cs = src[..n].iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n as f64;
    let cd = dst[..n].iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n as f64;
    let mut h = Matrix3::zeros();
    for (s, d) in src[..n].iter().zip(&dst[..n]) {
        h += (s.coords - cs) * (d.coords - cd).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u?;
    let v = svd.v_t?.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, if d == 0.0 { 1.0 } else { d }));
    let rotation = v * correction * u.transpose();
    Some(RigidTransform::new(rotation, cd - rotation * cs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub transform: RigidTransform,
    pub inliers: usize,
    pub correspondences: usize,
    pub iterations: usize,
}

fn feature_distance2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// For every source feature, the index of the closest target feature (L2,
/// ties to the lower index).
fn match_features(src: &FpfhFeatures, dst: &FpfhFeatures) -> Vec<usize> {
    src.histograms
        .par_iter()
        .map(|h| {
            let mut best = (f64::INFINITY, 0usize);
            for (j, g) in dst.histograms.iter().enumerate() {
                let d = feature_distance2(h, g);
                if d < best.0 {
                    best = (d, j);
                }
            }
            best.1
        })
        .collect()
}

fn count_inliers(t: &RigidTransform, p: &[Point3<f64>], q: &[Point3<f64>], corr: &[usize], threshold2: f64) -> usize {
    corr.iter()
        .enumerate()
        .filter(|&(i, &j)| (t.apply(&p[i]) - q[j]).norm_squared() <= threshold2)
        .count()
}

/// Coarse registration of `p` onto `q` from feature correspondences.
///
/// Each hypothesis draws three correspondences, rejects them unless all
/// pairwise edge lengths agree within `params.edge_length_ratio`, and fits a
/// rigid transform; it is scored by the number of correspondences it maps
/// within `params.inlier_threshold`. Sampling stops early once the best
/// inlier ratio `w` makes `log(1 - confidence) / log(1 - w^3)` iterations
/// sufficient. The winner is refitted on its inliers.
pub fn ransac_register(
    p: &[Point3<f64>],
    q: &[Point3<f64>],
    feat_p: &FpfhFeatures,
    feat_q: &FpfhFeatures,
    params: &RansacParams,
    seed: u64,
) -> Result<RansacResult, GeometryError> {
    if feat_p.len() != p.len() || feat_q.len() != q.len() {
        return Err(GeometryError::RegistrationFailed("feature count does not match point count".into()));
    }
    if p.len() < 3 || q.len() < 3 {
        return Err(GeometryError::RegistrationFailed("fewer than 3 points".into()));
    }
    let corr = match_features(feat_p, feat_q);
    let n = corr.len();
    let threshold2 = params.inlier_threshold * params.inlier_threshold;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, RigidTransform)> = None;
    let mut needed = params.max_iterations;
    let mut iterations = 0;
    while iterations < needed.min(params.max_iterations) {
        iterations += 1;
        let i0 = rng.random_range(0..n);
        let i1 = rng.random_range(0..n);
        let i2 = rng.random_range(0..n);
        if i0 == i1 || i0 == i2 || i1 == i2 {
            continue;
        }
        let idx = [i0, i1, i2];
        let src = idx.map(|i| p[i]);
        let dst = idx.map(|i| q[corr[i]]);
        let consistent = [(0, 1), (0, 2), (1, 2)].iter().all(|&(a, b)| {
            let ls = (src[a] - src[b]).norm();
            let ld = (dst[a] - dst[b]).norm();
            ls > 0.0 && ld > 0.0 && ls.min(ld) >= params.edge_length_ratio * ls.max(ld)
        });
        if !consistent {
            continue;
        }
        let Some(t) = kabsch(&src, &dst) else { continue };
        let inliers = count_inliers(&t, p, q, &corr, threshold2);
        if best.as_ref().is_none_or(|(b, _)| inliers > *b) {
            best = Some((inliers, t));
            let w = inliers as f64 / n as f64;
            let fail = 1.0 - w * w * w;
            needed = if fail <= 0.0 {
                iterations
            } else {
                let est = (1.0 - params.confidence).ln() / fail.ln();
                if est.is_finite() {
                    est.ceil().max(1.0) as usize
                } else {
                    params.max_iterations
                }
            };
        }
    }
    let Some((inliers, mut transform)) = best.filter(|(c, _)| *c >= 3) else {
        return Err(GeometryError::RegistrationFailed(format!(
            "no hypothesis reached 3 inliers in {iterations} iterations"
        )));
    };
    let (src, dst): (Vec<Point3<f64>>, Vec<Point3<f64>>) = corr
        .iter()
        .enumerate()
        .filter(|&(i, &j)| (transform.apply(&p[i]) - q[j]).norm_squared() <= threshold2)
        .map(|(i, &j)| (p[i], q[j]))
        .unzip();
    if let Some(refit) = kabsch(&src, &dst) {
        if count_inliers(&refit, p, q, &corr, threshold2) >= inliers {
            transform = refit;
        }
    }
    Ok(RansacResult {
        inliers: count_inliers(&transform, p, q, &corr, threshold2),
        transform,
        correspondences: n,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub transform: RigidTransform,
    pub iterations: usize,
    /// RMS nearest-neighbour distance at `init` followed by one entry per
    /// accepted iteration; non-increasing.
    pub residuals: Vec<f64>,
}

impl IcpResult {
    pub fn final_residual(&self) -> f64 {
        *self.residuals.last().expect("residuals start with the initial value")
    }
}

fn rms(d2: &[f64]) -> f64 {
    (d2.iter().sum::<f64>() / d2.len() as f64).sqrt()
}

/// Point-to-point ICP of `p` onto `q` starting from `init`.
///
/// Every iteration pairs each transformed source point with its nearest
/// target point and solves for the best rigid update. An update that would
/// increase the RMS residual is rejected and the loop stops; it also stops
/// when the relative RMS change drops below `params.relative_tolerance` or
/// after `params.max_iterations` accepted steps.
pub fn icp_refine(p: &[Point3<f64>], q: &[Point3<f64>], init: &RigidTransform, params: &IcpParams) -> Result<IcpResult, GeometryError> {
    if p.is_empty() || q.is_empty() {
        return Err(GeometryError::EmptyCloud);
    }
    let tree = KdTree::new(q);
    let mut current = *init;
    let mut moved = current.apply_all(p);
    let mut current_rms = rms(&nearest_sq_distances(&tree, &moved));
    let mut residuals = vec![current_rms];
    let mut iterations = 0;
    while iterations < params.max_iterations && current_rms > 0.0 {
        let targets: Vec<Point3<f64>> = moved
            .par_iter()
            .map(|m| q[tree.nearest(m).expect("target is non-empty").0])
            .collect();
        let Some(step) = kabsch(&moved, &targets) else { break };
        let candidate = step.compose(&current);
        let candidate_moved = candidate.apply_all(p);
        let candidate_rms = rms(&nearest_sq_distances(&tree, &candidate_moved));
        if candidate_rms > current_rms {
            break;
        }
        iterations += 1;
        let change = (current_rms - candidate_rms) / current_rms;
        current = candidate;
        moved = candidate_moved;
        current_rms = candidate_rms;
        residuals.push(current_rms);
        if change < params.relative_tolerance {
            break;
        }
    }
    Ok(IcpResult {
        transform: current,
        iterations,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_points, shapes};

    #[test]
    fn kabsch_recovers_exact_transform() {
        let cloud = sample_points(&shapes::l_bracket(), 200, 5).unwrap().points;
        let t = RigidTransform::from_axis_angle(&Vector3::new(1.0, 1.0, 0.2), 2.5, Vector3::new(-3.0, 0.5, 7.0));
        let moved = t.apply_all(&cloud);
        let fit = kabsch(&cloud, &moved).unwrap();
        assert!((fit.rotation - t.rotation).norm() < 1e-9);
        assert!((fit.translation - t.translation).norm() < 1e-9);
        assert!(fit.is_proper(1e-9));
    }

    #[test]
    fn kabsch_avoids_reflections_on_planar_input() {
        let src = [Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)];
        let fit = kabsch(&src, &src).unwrap();
        assert!(fit.is_proper(1e-9));
        assert!((fit.rotation - Matrix3::identity()).norm() < 1e-9);
    }

    #[test]
    fn icp_fixed_point_and_monotone() {
        let q = sample_points(&shapes::l_bracket(), 500, 6).unwrap().points;
        let params = IcpParams::default();
        let exact = icp_refine(&q, &q, &RigidTransform::identity(), &params).unwrap();
        assert_eq!(exact.iterations, 0);
        assert_eq!(exact.transform, RigidTransform::identity());

        let t = RigidTransform::from_axis_angle(&Vector3::new(0.0, 0.3, 1.0), 0.05, Vector3::new(0.02, -0.01, 0.03));
        let p = t.inverse().apply_all(&q);
        let r = icp_refine(&p, &q, &RigidTransform::identity(), &params).unwrap();
        assert!(r.residuals.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.final_residual() < 1e-6, "{:?}", r.residuals);
    }
}
