use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use super::kdtree::KdTree;
use super::{GeometryError, PointCloud, RigidTransform};

pub fn centroid(points: &[Point3<f64>]) -> Result<Point3<f64>, GeometryError> {
    if points.is_empty() {
        return Err(GeometryError::EmptyCloud);
    }
    let sum = points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords);
    Ok(Point3::from(sum / points.len() as f64))
}

/// Squared distance from every query point to its nearest neighbour in `tree`.
/// Queries run in parallel; the output order follows `queries`.
pub(crate) fn nearest_sq_distances(tree: &KdTree, queries: &[Point3<f64>]) -> Vec<f64> {
    queries
        .par_iter()
        .map(|q| tree.nearest(q).map_or(f64::INFINITY, |(_, d2)| d2))
        .collect()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Bidirectional Chamfer distance: the mean squared nearest-neighbour distance
/// from `p` to `q` plus the same from `q` to `p`.
pub fn chamfer(p: &PointCloud, q: &PointCloud) -> Result<f64, GeometryError> {
    chamfer_points(&p.points, &q.points)
}

pub(crate) fn chamfer_points(p: &[Point3<f64>], q: &[Point3<f64>]) -> Result<f64, GeometryError> {
    if p.is_empty() || q.is_empty() {
        return Err(GeometryError::EmptyCloud);
    }
    let tp = KdTree::new(p);
    let tq = KdTree::new(q);
    Ok(mean(&nearest_sq_distances(&tq, p)) + mean(&nearest_sq_distances(&tp, q)))
}

/// Root mean square distance from each point of `source` to its nearest
/// neighbour in `target`.
pub fn rms_nearest_distance(source: &[Point3<f64>], target: &KdTree) -> f64 {
    if source.is_empty() {
        return 0.0;
    }
    mean(&nearest_sq_distances(target, source)).sqrt()
}

/// Pure translation taking the centroid of `p` onto the centroid of `q`.
pub fn center_align(p: &PointCloud, q: &PointCloud) -> Result<RigidTransform, GeometryError> {
    let cp = centroid(&p.points)?;
    let cq = centroid(&q.points)?;
    Ok(RigidTransform::from_translation(cq - cp))
}

/// Root mean square distance of the points from their centroid.
pub fn scale_factor(cloud: &PointCloud) -> Result<f64, GeometryError> {
    let c = centroid(&cloud.points)?;
    let ms = cloud.points.iter().map(|p| (p - c).norm_squared()).sum::<f64>() / cloud.len() as f64;
    Ok(ms.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(points: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(points.iter().map(|&[x, y, z]| Point3::new(x, y, z)).collect())
    }

    #[test]
    fn two_single_points() {
        let p = cloud(&[[0.0, 0.0, 0.0]]);
        let q = cloud(&[[1.0, 0.0, 0.0]]);
        assert_eq!(chamfer(&p, &q).unwrap(), 2.0);
        assert_eq!(chamfer(&p, &p).unwrap(), 0.0);
        assert_eq!(chamfer(&p, &cloud(&[])), Err(GeometryError::EmptyCloud));
    }

    #[test]
    fn asymmetric_sizes() {
        // P -> Q: 0 and 1 (mean 0.5); Q -> P: 0 and 1 (mean 0.5).
        let p = cloud(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let q = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        assert_eq!(chamfer(&p, &q).unwrap(), 1.0);
        let q = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 3.0]]);
        // P -> Q: 0, 1; Q -> P: 0, 1, 9.
        assert!((chamfer(&p, &q).unwrap() - (0.5 + 10.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn center_alignment() {
        let q = cloud(&[[0.0, 0.0, 0.0], [2.0, 2.0, 2.0]]);
        let p = cloud(&[[1.0, 2.0, 3.0], [3.0, 4.0, 5.0]]);
        let t = center_align(&p, &q).unwrap();
        assert_eq!(t.translation, Vector3::new(-1.0, -2.0, -3.0));
        assert_eq!(center_align(&q, &q).unwrap(), RigidTransform::identity());
        let moved = PointCloud::new(t.apply_all(&p.points));
        assert!((centroid(&moved.points).unwrap() - centroid(&q.points).unwrap()).norm() < 1e-12);
    }

    #[test]
    fn cube_corners_scale() {
        let corners: Vec<[f64; 3]> = (0..8)
            .map(|i| [(i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64])
            .collect();
        let s = scale_factor(&cloud(&corners)).unwrap();
        assert!((s - 3f64.sqrt() / 2.0).abs() < 1e-12);
        assert_eq!(scale_factor(&cloud(&[[4.0, 4.0, 4.0]; 3])).unwrap(), 0.0);
    }
}
