#![allow(dead_code)]

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Point3, Rotation3, Unit, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use stepkit_core::eval::ExternalCheckerSpec;
use stepkit_core::geometry::{shapes, write_stl_binary, RigidTransform, TriMesh};
use stepkit_core::synth::{synthetic_corpus, synthetic_step, SynthOptions};

pub const CUBE_STEP: &str = include_str!("../data/cube.step");
pub const SAMPLES: &[(&str, &str)] = &[
    ("cube.step", include_str!("../data/cube.step")),
    ("forward_refs.step", include_str!("../data/forward_refs.step")),
    ("mixed_params.step", include_str!("../data/mixed_params.step")),
];

/// Sample files plus 60 synthetic ones.
pub fn corpus() -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = SAMPLES.iter().map(|(n, t)| (n.to_string(), t.to_string())).collect();
    for (i, text) in synthetic_corpus(2024, 60, 5..=400).into_iter().enumerate() {
        out.push((format!("synth_{i:03}.step"), text));
    }
    out
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let axis = loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm() > 0.1 {
            break v;
        }
    };
    let angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).into_inner()
}

/// Random rotation, translation and uniform scale applied to a mesh.
pub fn similarity(mesh: &TriMesh, rotation: Matrix3<f64>, translation: Vector3<f64>, scale: f64) -> TriMesh {
    let t = RigidTransform::new(rotation, translation);
    mesh.transformed(|p| t.apply(&Point3::from(p.coords * scale)))
}

/// Shell script standing in for a STEP mesher: copies `<mesh_dir>/<stem>.stl`
/// to the output, fails with status 3 when no such mesh exists, and hangs
/// for stems containing "timeout".
pub fn fake_checker(dir: &Path, mesh_dir: &Path, timeout_s: f64) -> ExternalCheckerSpec {
    let script = dir.join("fake_mesher.sh");
    let body = format!(
        "#!/bin/sh\nstem=$(basename \"$1\")\nstem=${{stem%.*}}\ncase \"$stem\" in *timeout*) sleep 30;; esac\n\
         src='{}'/\"$stem.stl\"\nif [ ! -f \"$src\" ]; then echo \"no mesh for $stem\" >&2; exit 3; fi\ncp \"$src\" \"$2\"\n",
        mesh_dir.display()
    );
    std::fs::write(&script, body).unwrap();
    ExternalCheckerSpec::new(format!("sh '{}' {{input}} {{output}}", script.display()), timeout_s).unwrap()
}

pub fn write_mesh(path: &Path, mesh: &TriMesh) {
    std::fs::write(path, write_stl_binary(mesh)).unwrap();
}

pub fn synth(entities: usize, seed: u64) -> String {
    synthetic_step(
        seed,
        &SynthOptions {
            entities,
            ..SynthOptions::default()
        },
    )
}

/// Hand-checked outcome of one pair of the constructed batch.
pub struct Expected {
    pub stem: &'static str,
    pub completed: bool,
    pub renderable: bool,
    pub entity_count: Option<usize>,
    pub has_scd: bool,
}

pub struct TenPairBatch {
    pub pred_dir: PathBuf,
    pub gt_dir: PathBuf,
    pub checker: ExternalCheckerSpec,
    pub expected: Vec<Expected>,
    pub gt_step_entities: Vec<usize>,
}

/// Ten prediction/ground-truth pairs with known outcomes: five measurable
/// pairs, one truncated file, one syntax error, one checker failure, one
/// unreadable mesh and one checker timeout.
pub fn ten_pair_batch(root: &Path) -> TenPairBatch {
    let pred_dir = root.join("pred");
    let gt_dir = root.join("gt");
    let mesh_dir = root.join("meshes");
    for d in [&pred_dir, &gt_dir, &mesh_dir] {
        std::fs::create_dir_all(d).unwrap();
    }
    let checker = fake_checker(root, &mesh_dir, 2.0);

    let cyl = shapes::cylinder(0.5, 2.0, 32);
    let moved_cyl = similarity(
        &cyl,
        Rotation3::from_euler_angles(0.3, -0.7, 1.1).into_inner(),
        Vector3::new(4.0, -2.0, 1.0),
        1.6,
    );
    let measurable: [(&str, usize, TriMesh, TriMesh); 4] = [
        ("p01_cube", 12, shapes::cube(1.0), shapes::cube(1.0)),
        ("p02_bracket", 30, shapes::l_bracket(), shapes::l_bracket()),
        ("p03_cylinder", 45, moved_cyl, cyl),
        ("p04_stretched", 7, shapes::cuboid([0.0; 3], [1.0, 1.0, 1.25]), shapes::cube(1.0)),
    ];
    let mut expected = Vec::new();
    for (i, (stem, n, pred_mesh, gt_mesh)) in measurable.into_iter().enumerate() {
        std::fs::write(pred_dir.join(format!("{stem}.step")), synth(n, 100 + i as u64)).unwrap();
        write_mesh(&mesh_dir.join(format!("{stem}.stl")), &pred_mesh);
        write_mesh(&gt_dir.join(format!("{stem}.stl")), &gt_mesh);
        expected.push(Expected {
            stem,
            completed: true,
            renderable: true,
            entity_count: Some(n),
            has_scd: true,
        });
    }

    let full = synth(25, 7);
    let cut = &full[..full.len() / 2];
    std::fs::write(pred_dir.join("p05_truncated.step"), cut).unwrap();
    write_mesh(&gt_dir.join("p05_truncated.stl"), &shapes::cube(1.0));
    expected.push(Expected {
        stem: "p05_truncated",
        completed: false,
        renderable: false,
        entity_count: None,
        has_scd: false,
    });

    let broken = synth(10, 8).replacen("DATA;\n", "DATA;\n#999999=BROKEN(#1,,);\n", 1);
    std::fs::write(pred_dir.join("p06_syntax.step"), broken).unwrap();
    write_mesh(&gt_dir.join("p06_syntax.stl"), &shapes::cube(1.0));
    expected.push(Expected {
        stem: "p06_syntax",
        completed: true,
        renderable: false,
        entity_count: None,
        has_scd: false,
    });

    for (stem, n, seed) in [("p07_nomesh", 20, 9), ("p08_badmesh", 9, 10), ("p09_timeout", 15, 11)] {
        std::fs::write(pred_dir.join(format!("{stem}.step")), synth(n, seed)).unwrap();
        write_mesh(&gt_dir.join(format!("{stem}.stl")), &shapes::cube(1.0));
        expected.push(Expected {
            stem,
            completed: true,
            renderable: false,
            entity_count: Some(n),
            has_scd: false,
        });
    }
    std::fs::write(mesh_dir.join("p08_badmesh.stl"), b"this is not an STL file").unwrap();

    // Ground truth given as STEP, meshed by the same checker.
    std::fs::write(pred_dir.join("p10_wedge.step"), synth(60, 12)).unwrap();
    std::fs::write(gt_dir.join("p10_wedge.step"), synth(33, 13)).unwrap();
    write_mesh(&mesh_dir.join("p10_wedge.stl"), &shapes::wedge());
    expected.push(Expected {
        stem: "p10_wedge",
        completed: true,
        renderable: true,
        entity_count: Some(60),
        has_scd: true,
    });

    TenPairBatch {
        pred_dir,
        gt_dir,
        checker,
        expected,
        gt_step_entities: vec![33],
    }
}

/// Median by full sort: middle element, or the mean of the two middle ones.
pub fn sorted_median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}
