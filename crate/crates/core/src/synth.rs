//! Seeded generator of syntactically varied Part-21 files with acyclic
//! reference graphs, for tests, benchmarks and corpus experiments.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TYPE_NAMES: &[&str] = &[
    "CARTESIAN_POINT",
    "DIRECTION",
    "VECTOR",
    "AXIS2_PLACEMENT_3D",
    "LINE",
    "CIRCLE",
    "PLANE",
    "VERTEX_POINT",
    "EDGE_CURVE",
    "ORIENTED_EDGE",
    "EDGE_LOOP",
    "FACE_OUTER_BOUND",
    "ADVANCED_FACE",
    "CLOSED_SHELL",
    "MANIFOLD_SOLID_BREP",
    "SHAPE_REPRESENTATION",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    pub entities: usize,
    /// Upper bound on references per entity.
    pub max_refs: usize,
    /// Use sparse random ids and write records in random order, so that
    /// forward references occur.
    pub shuffle: bool,
    /// Probability that an entity is written as a complex instance.
    pub complex_fraction: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            entities: 60,
            max_refs: 3,
            shuffle: true,
            complex_fraction: 0.05,
        }
    }
}

fn real(rng: &mut ChaCha8Rng) -> String {
    let v: f64 = rng.random_range(-100.0..100.0);
    match rng.random_range(0..5) {
        0 => format!("{v:.1}"),
        1 => format!("{:.6E}", v).replace("E", "E+").replace("E+-", "E-"),
        2 => "0.".to_string(),
        3 => format!("{}", v),
        _ => format!("{:.3}E-3", v),
    }
}

fn scalar(rng: &mut ChaCha8Rng) -> String {
    match rng.random_range(0..8) {
        0..=2 => real(rng),
        3 => rng.random_range(-50i64..500).to_string(),
        4 => format!("'p{}'", rng.random_range(0..1000)),
        5 => [".T.", ".F.", ".UNSPECIFIED."][rng.random_range(0..3)].to_string(),
        6 => "$".to_string(),
        _ => format!("LENGTH_MEASURE({})", real(rng)),
    }
}

fn params(rng: &mut ChaCha8Rng, refs: &[u64]) -> String {
    let mut parts = vec!["''".to_string()];
    for _ in 0..rng.random_range(0..3) {
        parts.push(scalar(rng));
    }
    if refs.len() > 1 && rng.random_bool(0.5) {
        let list: Vec<String> = refs.iter().map(|r| format!("#{r}")).collect();
        parts.push(format!("({})", list.join(",")));
    } else {
        parts.extend(refs.iter().map(|r| format!("#{r}")));
    }
    if rng.random_bool(0.2) {
        let coords: Vec<String> = (0..3).map(|_| real(rng)).collect();
        parts.push(format!("({})", coords.join(",")));
    }
    parts.join(",")
}

/// Returns the text of a complete file with `opts.entities` DATA records.
/// Identical seeds give identical text.
pub fn synthetic_step(seed: u64, opts: &SynthOptions) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = opts.entities;
    let ids: Vec<u64> = if opts.shuffle {
        let mut pool: Vec<u64> = (1..=(3 * n as u64).max(1)).collect();
        pool.shuffle(&mut rng);
        pool.truncate(n);
        pool
    } else {
        (1..=n as u64).collect()
    };

    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let k = if i == 0 { 0 } else { rng.random_range(0..=opts.max_refs.min(i)) };
        let mut targets: Vec<usize> = (0..i).collect();
        targets.shuffle(&mut rng);
        let refs: Vec<u64> = targets[..k].iter().map(|&t| ids[t]).collect();
        let name = TYPE_NAMES[rng.random_range(0..TYPE_NAMES.len())];
        let body = if rng.random_bool(opts.complex_fraction) {
            format!(
                "(GEOMETRIC_REPRESENTATION_CONTEXT({})GLOBAL_UNIT_ASSIGNED_CONTEXT({})REPRESENTATION_CONTEXT('c','3D'))",
                rng.random_range(1..4),
                params(&mut rng, &refs)
            )
        } else {
            format!("{name}({})", params(&mut rng, &refs))
        };
        records.push(format!("#{}={body};", ids[i]));
    }
    if opts.shuffle {
        records.shuffle(&mut rng);
    }

    let mut out = String::from(
        "ISO-10303-21;\nHEADER;\nFILE_DESCRIPTION(('synthetic'),'2;1');\n\
         FILE_NAME('synth.step','2024-01-01T00:00:00',('stepkit'),(''),'','','');\n\
         FILE_SCHEMA(('AUTOMOTIVE_DESIGN'));\nENDSEC;\nDATA;\n",
    );
    for r in records {
        out.push_str(&r);
        out.push('\n');
    }
    out.push_str("ENDSEC;\nEND-ISO-10303-21;\n");
    out
}

/// `count` files with entity counts drawn uniformly from `entities`.
pub fn synthetic_corpus(seed: u64, count: usize, entities: std::ops::RangeInclusive<usize>) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let opts = SynthOptions {
                entities: rng.random_range(entities.clone()),
                shuffle: i % 4 != 0,
                ..SynthOptions::default()
            };
            synthetic_step(rng.random(), &opts)
        })
        .collect()
}
