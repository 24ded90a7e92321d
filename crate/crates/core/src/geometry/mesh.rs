use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::GeometryError;

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
    /// Seed the cloud was sampled with, if any.
    pub source_seed: u64,
}

impl PointCloud {
    pub fn new(points: Vec<Point3<f64>>) -> PointCloud {
        PointCloud { points, source_seed: 0 }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl TriMesh {
    pub fn triangle(&self, t: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn has_positive_area(&self) -> bool {
        (0..self.triangles.len()).any(|t| self.triangle_area(t) > 0.0)
    }

    pub fn transformed(&self, f: impl Fn(&Point3<f64>) -> Point3<f64>) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(f).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Builds a mesh from a triangle soup, merging bitwise-equal vertices
    /// (with `-0.0` treated as `0.0`).
    pub fn from_triangles(soup: &[[Point3<f64>; 3]]) -> TriMesh {
        let mut index: HashMap<[u64; 3], usize> = HashMap::new();
        let mut vertices = Vec::new();
        let mut triangles = Vec::with_capacity(soup.len());
        for tri in soup {
            let mut ids = [0usize; 3];
            for (slot, p) in ids.iter_mut().zip(tri) {
                let key = [p.x, p.y, p.z].map(|c| if c == 0.0 { 0u64 } else { c.to_bits() });
                *slot = *index.entry(key).or_insert_with(|| {
                    vertices.push(*p);
                    vertices.len() - 1
                });
            }
            triangles.push(ids);
        }
        TriMesh { vertices, triangles }
    }
}

fn malformed(msg: impl Into<String>) -> GeometryError {
    GeometryError::MalformedStl(msg.into())
}

/// Parses a binary or ASCII STL file and welds coincident vertices.
pub fn load_stl(bytes: &[u8]) -> Result<TriMesh, GeometryError> {
    let soup = if is_binary_stl(bytes) {
        parse_binary(bytes)?
    } else if bytes.trim_ascii_start().starts_with(b"solid") {
        parse_ascii(bytes)?
    } else if bytes.len() >= 84 {
        return Err(malformed("binary STL size does not match its triangle count"));
    } else {
        return Err(malformed("not an STL file"));
    };
    if soup.is_empty() {
        return Err(GeometryError::EmptyMesh);
    }
    Ok(TriMesh::from_triangles(&soup))
}

fn is_binary_stl(bytes: &[u8]) -> bool {
    if bytes.len() < 84 {
        return false;
    }
    let count = u32::from_le_bytes(bytes[80..84].try_into().expect("4 bytes")) as usize;
    count.checked_mul(50).and_then(|n| n.checked_add(84)) == Some(bytes.len())
}

fn parse_binary(bytes: &[u8]) -> Result<Vec<[Point3<f64>; 3]>, GeometryError> {
    let read = |off: usize| f32::from_le_bytes(bytes[off..off + 4].try_into().expect("4 bytes")) as f64;
    let count = (bytes.len() - 84) / 50;
    let mut soup = Vec::with_capacity(count);
    for t in 0..count {
        let base = 84 + t * 50 + 12;
        let mut tri = [Point3::origin(); 3];
        for (v, p) in tri.iter_mut().enumerate() {
            let o = base + v * 12;
            *p = Point3::new(read(o), read(o + 4), read(o + 8));
            if !p.coords.iter().all(|c| c.is_finite()) {
                return Err(malformed(format!("non-finite vertex in triangle {t}")));
            }
        }
        soup.push(tri);
    }
    Ok(soup)
}

fn parse_ascii(bytes: &[u8]) -> Result<Vec<[Point3<f64>; 3]>, GeometryError> {
    let text = std::str::from_utf8(bytes).map_err(|_| malformed("ASCII STL is not valid UTF-8"))?;
    let mut tokens = text.split_ascii_whitespace().peekable();
    let mut soup = Vec::new();
    let mut current: Vec<Point3<f64>> = Vec::with_capacity(3);
    let mut in_facet = false;
    let mut seen_end = false;
    let number = |tok: Option<&str>| -> Result<f64, GeometryError> {
        let tok = tok.ok_or_else(|| malformed("unexpected end of file"))?;
        let v: f64 = tok.parse().map_err(|_| malformed(format!("bad number {tok:?}")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(malformed(format!("non-finite number {tok:?}")))
        }
    };
    while let Some(tok) = tokens.next() {
        match tok {
            "facet" => {
                if in_facet {
                    return Err(malformed("nested facet"));
                }
                in_facet = true;
                current.clear();
            }
            "normal" => {
                for _ in 0..3 {
                    number(tokens.next())?;
                }
            }
            "vertex" => {
                if !in_facet {
                    return Err(malformed("vertex outside facet"));
                }
                let p = Point3::new(number(tokens.next())?, number(tokens.next())?, number(tokens.next())?);
                current.push(p);
            }
            "endfacet" => {
                if !in_facet || current.len() != 3 {
                    return Err(malformed(format!("facet with {} vertices", current.len())));
                }
                soup.push([current[0], current[1], current[2]]);
                in_facet = false;
            }
            "endsolid" => {
                seen_end = true;
                break;
            }
            "solid" if soup.is_empty() && !in_facet => {
                // The rest of the line is the solid's name.
                while let Some(&next) = tokens.peek() {
                    if next == "facet" || next == "endsolid" {
                        break;
                    }
                    tokens.next();
                }
            }
            "outer" | "loop" | "endloop" => {}
            other => return Err(malformed(format!("unexpected token {other:?}"))),
        }
    }
    if in_facet || !seen_end {
        return Err(malformed("unterminated solid"));
    }
    Ok(soup)
}

fn facet_normal(tri: &[Point3<f64>; 3]) -> Vector3<f64> {
    let n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0]));
    let len = n.norm();
    if len > 0.0 {
        n / len
    } else {
        Vector3::zeros()
    }
}

pub fn write_stl_binary(mesh: &TriMesh) -> Vec<u8> {
    let mut out = Vec::with_capacity(84 + 50 * mesh.triangles.len());
    let mut header = [0u8; 80];
    header[..7].copy_from_slice(b"stepkit");
    out.extend_from_slice(&header);
    out.extend_from_slice(&(mesh.triangles.len() as u32).to_le_bytes());
    for t in 0..mesh.triangles.len() {
        let tri = mesh.triangle(t);
        let n = facet_normal(&tri);
        for c in n.iter().chain(tri.iter().flat_map(|p| p.coords.iter())) {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
        out.extend_from_slice(&[0, 0]);
    }
    out
}

pub fn write_stl_ascii(mesh: &TriMesh, name: &str) -> String {
    let mut out = format!("solid {name}\n");
    for t in 0..mesh.triangles.len() {
        let tri = mesh.triangle(t);
        let n = facet_normal(&tri);
        let _ = writeln!(out, "  facet normal {:e} {:e} {:e}\n    outer loop", n.x, n.y, n.z);
        for p in &tri {
            let _ = writeln!(out, "      vertex {:e} {:e} {:e}", p.x, p.y, p.z);
        }
        out.push_str("    endloop\n  endfacet\n");
    }
    let _ = writeln!(out, "endsolid {name}");
    out
}

/// Draws `n` points uniformly over the surface: triangles are picked with
/// probability proportional to area, positions by square-root barycentric
/// sampling. The generator is ChaCha8 seeded with `seed`.
pub fn sample_points(mesh: &TriMesh, n: usize, seed: u64) -> Result<PointCloud, GeometryError> {
    if mesh.triangles.is_empty() {
        return Err(GeometryError::EmptyMesh);
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut owners = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        let area = mesh.triangle_area(t);
        if area > 0.0 {
            total += area;
            cumulative.push(total);
            owners.push(t);
        }
    }
    if !(total > 0.0) || !total.is_finite() {
        return Err(GeometryError::DegenerateMesh);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let u = rng.random::<f64>() * total;
        let slot = cumulative.partition_point(|&c| c <= u).min(owners.len() - 1);
        let [a, b, c] = mesh.triangle(owners[slot]);
        let s = rng.random::<f64>().sqrt();
        let r = rng.random::<f64>();
        points.push(Point3::from(a.coords * (1.0 - s) + b.coords * (s * (1.0 - r)) + c.coords * (s * r)));
    }
    Ok(PointCloud {
        points,
        source_seed: seed,
    })
}
