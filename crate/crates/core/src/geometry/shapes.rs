//! Closed triangle meshes used as fixtures and for synthetic checks. Faces
//! are wound counter-clockwise seen from outside.

use std::f64::consts::PI;

use nalgebra::Point3;

use super::TriMesh;

fn quad(a: Point3<f64>, b: Point3<f64>, c: Point3<f64>, d: Point3<f64>) -> [[Point3<f64>; 3]; 2] {
    [[a, b, c], [a, c, d]]
}

/// Axis-aligned box with one corner at `min` and extents `size`.
pub fn cuboid(min: [f64; 3], size: [f64; 3]) -> TriMesh {
    TriMesh::from_triangles(&cuboid_soup(min, size))
}

fn cuboid_soup(min: [f64; 3], size: [f64; 3]) -> Vec<[Point3<f64>; 3]> {
    let [x0, y0, z0] = min;
    let [x1, y1, z1] = [x0 + size[0], y0 + size[1], z0 + size[2]];
    let v = |x, y, z| Point3::new(x, y, z);
    [
        quad(v(x0, y0, z0), v(x0, y1, z0), v(x1, y1, z0), v(x1, y0, z0)),
        quad(v(x0, y0, z1), v(x1, y0, z1), v(x1, y1, z1), v(x0, y1, z1)),
        quad(v(x0, y0, z0), v(x1, y0, z0), v(x1, y0, z1), v(x0, y0, z1)),
        quad(v(x0, y1, z0), v(x0, y1, z1), v(x1, y1, z1), v(x1, y1, z0)),
        quad(v(x0, y0, z0), v(x0, y0, z1), v(x0, y1, z1), v(x0, y1, z0)),
        quad(v(x1, y0, z0), v(x1, y1, z0), v(x1, y1, z1), v(x1, y0, z1)),
    ]
    .into_iter()
    .flatten()
    .collect()
}

/// Cube of the given side length centered at the origin.
pub fn cube(side: f64) -> TriMesh {
    let h = side / 2.0;
    cuboid([-h, -h, -h], [side; 3])
}

/// L-shaped bracket: a 3 x 2 x 0.5 base plate with a 0.5 x 2 x 2 upright at
/// one end.
pub fn l_bracket() -> TriMesh {
    let v = |x, y, z| Point3::new(x, y, z);
    let profile = [
        v(0.0, 0.0, 0.0),
        v(3.0, 0.0, 0.0),
        v(3.0, 0.0, 0.5),
        v(0.5, 0.0, 0.5),
        v(0.5, 0.0, 2.5),
        v(0.0, 0.0, 2.5),
    ];
    let depth = 2.0;
    let back: Vec<Point3<f64>> = profile.iter().map(|p| v(p.x, depth, p.z)).collect();
    let mut soup = Vec::new();
    // Front face (y = 0, normal -y) and back face (normal +y), split into the
    // base and the upright rectangles.
    let front = [[0, 1, 2, 3], [0, 3, 4, 5]];
    for [a, b, c, d] in front {
        soup.extend(quad(profile[a], profile[b], profile[c], profile[d]));
        soup.extend(quad(back[a], back[d], back[c], back[b]));
    }
    for i in 0..profile.len() {
        let j = (i + 1) % profile.len();
        soup.extend(quad(profile[i], back[i], back[j], profile[j]));
    }
    TriMesh::from_triangles(&soup)
}

/// Closed cylinder along z with its base centered at the origin.
pub fn cylinder(radius: f64, height: f64, segments: usize) -> TriMesh {
    let segments = segments.max(3);
    let ring = |z: f64| -> Vec<Point3<f64>> {
        (0..segments)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / segments as f64;
                Point3::new(radius * a.cos(), radius * a.sin(), z)
            })
            .collect()
    };
    let bottom = ring(0.0);
    let top = ring(height);
    let cb = Point3::new(0.0, 0.0, 0.0);
    let ct = Point3::new(0.0, 0.0, height);
    let mut soup = Vec::new();
    for i in 0..segments {
        let j = (i + 1) % segments;
        soup.extend(quad(bottom[i], bottom[j], top[j], top[i]));
        soup.push([cb, bottom[j], bottom[i]]);
        soup.push([ct, top[i], top[j]]);
    }
    TriMesh::from_triangles(&soup)
}

/// Latitude/longitude sphere centered at the origin.
pub fn uv_sphere(radius: f64, stacks: usize, slices: usize) -> TriMesh {
    let stacks = stacks.max(2);
    let slices = slices.max(3);
    let point = |i: usize, j: usize| {
        if i == 0 {
            return Point3::new(0.0, 0.0, radius);
        }
        if i == stacks {
            return Point3::new(0.0, 0.0, -radius);
        }
        let theta = PI * i as f64 / stacks as f64;
        let phi = 2.0 * PI * (j % slices) as f64 / slices as f64;
        Point3::new(radius * theta.sin() * phi.cos(), radius * theta.sin() * phi.sin(), radius * theta.cos())
    };
    let mut soup = Vec::new();
    for i in 0..stacks {
        for j in 0..slices {
            let (a, b, c, d) = (point(i, j), point(i + 1, j), point(i + 1, j + 1), point(i, j + 1));
            if i == 0 {
                soup.push([a, b, c]);
            } else if i + 1 == stacks {
                soup.push([a, b, d]);
            } else {
                soup.extend(quad(a, b, c, d));
            }
        }
    }
    TriMesh::from_triangles(&soup)
}

/// Triangular prism: right triangle with legs 2 (x) and 1 (z), extruded 1.5
/// along y.
pub fn wedge() -> TriMesh {
    let v = |x, y, z| Point3::new(x, y, z);
    let (a0, b0, c0) = (v(0.0, 0.0, 0.0), v(2.0, 0.0, 0.0), v(0.0, 0.0, 1.0));
    let (a1, b1, c1) = (v(0.0, 1.5, 0.0), v(2.0, 1.5, 0.0), v(0.0, 1.5, 1.0));
    let mut soup = vec![[a0, b0, c0], [a1, c1, b1]];
    soup.extend(quad(a0, a1, b1, b0));
    soup.extend(quad(a0, c0, c1, a1));
    soup.extend(quad(b0, b1, c1, c0));
    TriMesh::from_triangles(&soup)
}

/// Regular-ish tetrahedron spanned by the origin and the three axis points
/// at distance `size`.
pub fn tetrahedron(size: f64) -> TriMesh {
    let o = Point3::origin();
    let x = Point3::new(size, 0.0, 0.0);
    let y = Point3::new(0.0, size, 0.0);
    let z = Point3::new(0.0, 0.0, size);
    TriMesh::from_triangles(&[[o, y, x], [o, x, z], [o, z, y], [x, y, z]])
}

/// The five meshes used for the alignment-invariance checks.
pub fn fixture_set() -> Vec<(&'static str, TriMesh)> {
    vec![
        ("box", cuboid([0.0, 0.0, 0.0], [1.0, 2.0, 3.0])),
        ("l_bracket", l_bracket()),
        ("cylinder", cylinder(0.5, 2.0, 32)),
        ("sphere", uv_sphere(1.0, 16, 32)),
        ("wedge", wedge()),
    ]
}
