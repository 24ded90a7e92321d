use std::f64::consts::PI;

use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};
use rayon::prelude::*;

use super::chamfer::centroid;
use super::kdtree::KdTree;
use super::{GeometryError, PointCloud};

/// Bins per angular feature.
const SUB_BINS: usize = 11;
pub const FPFH_BINS: usize = 3 * SUB_BINS;
pub const MIN_FEATURE_POINTS: usize = 10;

/// One 33-bin histogram per point: three 11-bin blocks (normal twist angle,
/// normal tilt, normal/offset angle), each summing to 100 unless the point
/// has no neighbours within the radius.
#[derive(Debug, Clone, PartialEq)]
pub struct FpfhFeatures {
    pub histograms: Vec<[f64; FPFH_BINS]>,
}

impl FpfhFeatures {
    pub fn len(&self) -> usize {
        self.histograms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.histograms.is_empty()
    }
}

/// Unit normals from the covariance of the `k` nearest neighbours, flipped to
/// point away from the cloud centroid.
pub fn estimate_normals(points: &[Point3<f64>], tree: &KdTree, k: usize) -> Result<Vec<Vector3<f64>>, GeometryError> {
    let center = centroid(points)?;
    let normals = points
        .par_iter()
        .map(|p| {
            let neighbours = tree.knn(p, k.max(3));
            let mean = neighbours
                .iter()
                .fold(Vector3::zeros(), |acc, &(i, _)| acc + points[i].coords)
                / neighbours.len() as f64;
            let mut cov = Matrix3::zeros();
            for &(i, _) in &neighbours {
                let d = points[i].coords - mean;
                cov += d * d.transpose();
            }
            let eig = SymmetricEigen::new(cov);
            let smallest = eig.eigenvalues.imin();
            let mut n: Vector3<f64> = eig.eigenvectors.column(smallest).into_owned();
            let len = n.norm();
            if len > 0.0 {
                n /= len;
            } else {
                n = Vector3::z();
            }
            orient_outward(n, p - center)
        })
        .collect();
    Ok(normals)
}

fn orient_outward(n: Vector3<f64>, offset: Vector3<f64>) -> Vector3<f64> {
    let d = n.dot(&offset);
    if d.abs() >= 1e-6 * offset.norm() && offset.norm() > 0.0 {
        return if d < 0.0 { -n } else { n };
    }
    // Tangent to the radial direction: fall back to a sign fixed by the
    // largest component.
    let largest = n.iamax();
    if n[largest] < 0.0 {
        -n
    } else {
        n
    }
}

fn bin(value: f64, lo: f64, hi: f64) -> usize {
    let b = ((value - lo) / (hi - lo) * SUB_BINS as f64).floor();
    if b.is_nan() {
        0
    } else {
        (b.max(0.0) as usize).min(SUB_BINS - 1)
    }
}

/// Angular pair features `(theta, alpha, phi)` of two oriented points, with the
/// source chosen as the point whose normal is closer to the connecting line.
fn pair_features(p1: &Point3<f64>, n1: &Vector3<f64>, p2: &Point3<f64>, n2: &Vector3<f64>) -> Option<[f64; 3]> {
    let mut dp = p2 - p1;
    let dist = dp.norm();
    if dist == 0.0 {
        return None;
    }
    let angle1 = n1.dot(&dp) / dist;
    let angle2 = n2.dot(&dp) / dist;
    // The source is the point whose normal makes the smaller angle with the
    // connecting line. Neighbours sharing a neighbourhood get numerically
    // equal normals, so near-ties take the smaller phi instead of leaving the
    // choice to rounding.
    let gap = angle1.abs() - angle2.abs();
    let swap = if gap.abs() <= 1e-9 { -angle2 < angle1 } else { gap < 0.0 };
    let (u, nt, phi) = if swap {
        dp = -dp;
        (n2, n1, -angle2)
    } else {
        (n1, n2, angle1)
    };
    let v = dp.cross(u);
    let v_norm = v.norm();
    if v_norm == 0.0 {
        return Some([0.0, 0.0, phi]);
    }
    let v = v / v_norm;
    let w = u.cross(&v);
    let alpha = v.dot(nt);
    let mut theta = w.dot(nt).atan2(u.dot(nt));
    // Antiparallel normals sit on the -pi/pi seam; rounding must not decide
    // which end of the histogram they land in.
    if theta < -PI + 1e-9 {
        theta = PI;
    }
    Some([theta, alpha, phi])
}

fn normalize_blocks(h: &mut [f64; FPFH_BINS]) {
    for block in h.chunks_mut(SUB_BINS) {
        let sum: f64 = block.iter().sum();
        if sum > 0.0 {
            for v in block {
                *v *= 100.0 / sum;
            }
        }
    }
}

/// Fast point feature histograms over neighbourhoods of the given radius.
///
/// Each point's simplified histogram counts pair features against its radius
/// neighbours; the final histogram adds the inverse-squared-distance weighted
/// average of the neighbours' simplified histograms, and every 11-bin block is
/// rescaled to sum 100.
pub fn fpfh_features(cloud: &PointCloud, radius: f64, normal_k: usize) -> Result<FpfhFeatures, GeometryError> {
    if cloud.len() < MIN_FEATURE_POINTS {
        return Err(GeometryError::TooFewPoints {
            found: cloud.len(),
            required: MIN_FEATURE_POINTS,
        });
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(GeometryError::InvalidConfig(format!("feature radius must be positive, got {radius}")));
    }
    let points = &cloud.points;
    let tree = KdTree::new(points);
    let normals = estimate_normals(points, &tree, normal_k)?;
    let neighbourhoods: Vec<Vec<(usize, f64)>> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| tree.within_radius(p, radius).into_iter().filter(|&(j, _)| j != i).collect())
        .collect();

    let spfh: Vec<[f64; FPFH_BINS]> = neighbourhoods
        .par_iter()
        .enumerate()
        .map(|(i, nbrs)| {
            let mut h = [0.0; FPFH_BINS];
            let mut count = 0usize;
            for &(j, _) in nbrs {
                if let Some([theta, alpha, phi]) = pair_features(&points[i], &normals[i], &points[j], &normals[j]) {
                    h[bin(theta, -PI, PI)] += 1.0;
                    h[SUB_BINS + bin(alpha, -1.0, 1.0)] += 1.0;
                    h[2 * SUB_BINS + bin(phi, -1.0, 1.0)] += 1.0;
                    count += 1;
                }
            }
            if count > 0 {
                let incr = 100.0 / count as f64;
                h.iter_mut().for_each(|v| *v *= incr);
            }
            h
        })
        .collect();

    let histograms = neighbourhoods
        .par_iter()
        .enumerate()
        .map(|(i, nbrs)| {
            let mut weighted = [0.0; FPFH_BINS];
            for &(j, d2) in nbrs {
                if d2 == 0.0 {
                    continue;
                }
                for (w, s) in weighted.iter_mut().zip(&spfh[j]) {
                    *w += s / d2;
                }
            }
            normalize_blocks(&mut weighted);
            let mut h = spfh[i];
            for (v, w) in h.iter_mut().zip(&weighted) {
                *v += w;
            }
            normalize_blocks(&mut h);
            h
        })
        .collect();
    Ok(FpfhFeatures { histograms })
}
