use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checker::{check_renderability, ExternalCheckerSpec, RenderFailure};
use super::stats::{entity_stats, mean, median, EntityStats};
use super::EvalError;
use crate::geometry::{geometric_reward, load_stl, scaled_chamfer, GeometryConfig, GeometryError, TriMesh};
use crate::step::{check_completion, parse_step};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    /// A file could not be read.
    Io,
    /// The prediction does not parse as Part 21.
    Parse,
    /// No checker is configured, or the configured one cannot be run.
    CheckerUnavailable,
    /// The checker ran but produced no usable mesh for the prediction.
    Render,
    Timeout,
    GtParse,
    GtRender,
    /// Alignment did not converge to a usable transform.
    Registration,
    /// Sampling or scale normalization hit a degenerate shape.
    Degenerate,
}

impl FailureReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            FailureReason::Io => "io",
            FailureReason::Parse => "parse",
            FailureReason::CheckerUnavailable => "checker_unavailable",
            FailureReason::Render => "render",
            FailureReason::Timeout => "timeout",
            FailureReason::GtParse => "gt_parse",
            FailureReason::GtRender => "gt_render",
            FailureReason::Registration => "registration",
            FailureReason::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairGeometry {
    pub cd: f64,
    pub gt_scale: f64,
    pub pred_scale: f64,
    pub stage_residuals: [f64; 3],
    pub icp_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub stem: String,
    pub completed: bool,
    /// `None` when renderability was not attempted (no checker available).
    pub renderable: Option<bool>,
    pub scd: Option<f64>,
    pub reward: Option<f64>,
    pub entity_count: Option<usize>,
    pub gt_entity_count: Option<usize>,
    pub failure_reason: Option<FailureReason>,
    pub detail: Option<String>,
    pub geometry: Option<PairGeometry>,
}

impl PairRecord {
    fn new(stem: &str) -> PairRecord {
        PairRecord {
            stem: stem.to_string(),
            completed: false,
            renderable: None,
            scd: None,
            reward: None,
            entity_count: None,
            gt_entity_count: None,
            failure_reason: None,
            detail: None,
            geometry: None,
        }
    }

    fn fail(mut self, reason: FailureReason, detail: impl Into<String>) -> PairRecord {
        self.failure_reason = Some(reason);
        self.detail = Some(detail.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub total: usize,
    pub completed: usize,
    pub cr: f64,
    pub renderable: usize,
    /// Renderable predictions over all pairs; `None` if no pair was checked.
    pub rr: Option<f64>,
    pub scd_count: usize,
    /// Pairs without a scaled Chamfer distance, left out of `mscd`.
    pub excluded_pairs: usize,
    pub mscd: Option<f64>,
    pub mean_reward: Option<f64>,
    /// Mean entity count over predictions that parsed.
    pub aec_pred: Option<f64>,
    pub aec_gt: Option<f64>,
    pub pred_entities: Option<EntityStats>,
    pub gt_entities: Option<EntityStats>,
}

/// Aggregate metrics recomputed from per-pair records.
pub fn aggregate(records: &[PairRecord]) -> Result<Aggregates, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyBatch);
    }
    let total = records.len();
    let completed = records.iter().filter(|r| r.completed).count();
    let renderable = records.iter().filter(|r| r.renderable == Some(true)).count();
    let attempted = records.iter().any(|r| r.renderable.is_some());
    let scds: Vec<f64> = records.iter().filter_map(|r| r.scd).collect();
    let rewards: Vec<f64> = records.iter().filter_map(|r| r.reward).collect();
    let pred_counts: Vec<usize> = records.iter().filter_map(|r| r.entity_count).collect();
    let gt_counts: Vec<usize> = records.iter().filter_map(|r| r.gt_entity_count).collect();
    let pred_entities = entity_stats(&pred_counts).ok();
    let gt_entities = entity_stats(&gt_counts).ok();
    Ok(Aggregates {
        total,
        completed,
        cr: completed as f64 / total as f64,
        renderable,
        rr: attempted.then(|| renderable as f64 / total as f64),
        scd_count: scds.len(),
        excluded_pairs: total - scds.len(),
        mscd: median(&scds),
        mean_reward: mean(&rewards),
        aec_pred: pred_entities.as_ref().map(|s| s.avg),
        aec_gt: gt_entities.as_ref().map(|s| s.avg),
        pred_entities,
        gt_entities,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub records: Vec<PairRecord>,
    pub aggregates: Aggregates,
    pub unpaired_pred: Vec<String>,
    pub unpaired_gt: Vec<String>,
}

impl EvalReport {
    pub fn from_records(mut records: Vec<PairRecord>) -> Result<EvalReport, EvalError> {
        records.sort_by(|a, b| a.stem.cmp(&b.stem));
        let aggregates = aggregate(&records)?;
        Ok(EvalReport {
            schema_version: REPORT_SCHEMA_VERSION,
            records,
            aggregates,
            unpaired_pred: Vec::new(),
            unpaired_gt: Vec::new(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }

    pub fn from_json(text: &str) -> Result<EvalReport, EvalError> {
        serde_json::from_str(text).map_err(|e| EvalError::Io(format!("invalid report JSON: {e}")))
    }

    /// One row per pair.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "stem",
            "completed",
            "renderable",
            "scd",
            "reward",
            "entity_count",
            "gt_entity_count",
            "failure_reason",
            "detail",
        ])
        .expect("in-memory write");
        let opt = |v: Option<String>| v.unwrap_or_default();
        for r in &self.records {
            w.write_record([
                r.stem.clone(),
                r.completed.to_string(),
                opt(r.renderable.map(|b| b.to_string())),
                opt(r.scd.map(|v| format!("{v:e}"))),
                opt(r.reward.map(|v| v.to_string())),
                opt(r.entity_count.map(|v| v.to_string())),
                opt(r.gt_entity_count.map(|v| v.to_string())),
                opt(r.failure_reason.map(|f| f.as_str().to_string())),
                opt(r.detail.clone()),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
    }
}

#[derive(Debug, Clone, Default)]
pub struct BatchConfig {
    pub checker: Option<ExternalCheckerSpec>,
    pub geometry: GeometryConfig,
    /// Worker threads; 0 uses one per logical core.
    pub jobs: usize,
}

/// Input files for one prediction/ground-truth pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairPaths {
    pub stem: String,
    /// A STEP file, or an STL mesh used as-is.
    pub pred: PathBuf,
    pub gt_step: Option<PathBuf>,
    /// Pre-computed ground-truth mesh; takes precedence over meshing
    /// `gt_step`.
    pub gt_stl: Option<PathBuf>,
}

fn is_stl(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("stl"))
}

fn is_step(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("step") || e.eq_ignore_ascii_case("stp"))
}

enum MeshError {
    Checker(String),
    Render(RenderFailure, String),
    Io(String),
}

fn read_stl(path: &Path) -> Result<TriMesh, MeshError> {
    let bytes = std::fs::read(path).map_err(|e| MeshError::Io(format!("{}: {e}", path.display())))?;
    match load_stl(&bytes) {
        Ok(mesh) if mesh.has_positive_area() => Ok(mesh),
        Ok(_) => Err(MeshError::Render(RenderFailure::EmptyShape, String::new())),
        Err(e) => Err(MeshError::Render(
            RenderFailure::InvalidStl { message: e.to_string() },
            path.display().to_string(),
        )),
    }
}

fn render(step: &Path, out: &Path, checker: Option<&ExternalCheckerSpec>) -> Result<TriMesh, MeshError> {
    let Some(spec) = checker else {
        return Err(MeshError::Checker("no checker command configured".into()));
    };
    match check_renderability(step, out, spec) {
        Ok(outcome) if outcome.renderable => Ok(outcome.mesh.expect("renderable outcomes carry the mesh")),
        Ok(outcome) => Err(MeshError::Render(
            outcome.failure.expect("failed outcomes carry a reason"),
            outcome.diagnostics,
        )),
        Err(EvalError::CheckerUnavailable(msg)) => Err(MeshError::Checker(msg)),
        Err(e) => Err(MeshError::Io(e.to_string())),
    }
}

fn render_detail(failure: &RenderFailure, diagnostics: &str) -> String {
    if diagnostics.is_empty() {
        failure.to_string()
    } else {
        format!("{failure}: {diagnostics}")
    }
}

/// Runs the full per-pair pipeline: completion check, parse, meshing of both
/// sides, alignment and scaled Chamfer distance. Checker output goes to
/// `scratch`. Failures are recorded, never returned.
pub fn evaluate_pair(pair: &PairPaths, cfg: &BatchConfig, scratch: &Path) -> PairRecord {
    let mut rec = PairRecord::new(&pair.stem);

    if let Some(gt_step) = &pair.gt_step {
        if let Ok(text) = std::fs::read_to_string(gt_step) {
            rec.gt_entity_count = parse_step(&text).ok().map(|f| f.entity_count());
        }
    }

    let pred_mesh = if is_stl(&pair.pred) {
        rec.completed = true;
        match read_stl(&pair.pred) {
            Ok(mesh) => {
                rec.renderable = Some(true);
                mesh
            }
            Err(MeshError::Io(msg)) => return rec.fail(FailureReason::Io, msg),
            Err(MeshError::Render(f, d)) => {
                rec.renderable = Some(false);
                return rec.fail(FailureReason::Render, render_detail(&f, &d));
            }
            Err(MeshError::Checker(d)) => return rec.fail(FailureReason::CheckerUnavailable, d),
        }
    } else {
        let text = match std::fs::read(&pair.pred) {
            Ok(bytes) => String::from_utf8_lossy(&bytes).into_owned(),
            Err(e) => return rec.fail(FailureReason::Io, format!("{}: {e}", pair.pred.display())),
        };
        rec.completed = check_completion(&text);
        match parse_step(&text) {
            Ok(file) => rec.entity_count = Some(file.entity_count()),
            Err(e) => {
                if cfg.checker.is_some() {
                    rec.renderable = Some(false);
                }
                return rec.fail(FailureReason::Parse, e.to_string());
            }
        }
        match render(&pair.pred, &scratch.join(format!("{}.pred.stl", pair.stem)), cfg.checker.as_ref()) {
            Ok(mesh) => {
                rec.renderable = Some(true);
                mesh
            }
            Err(MeshError::Checker(msg)) => return rec.fail(FailureReason::CheckerUnavailable, msg),
            Err(MeshError::Io(msg)) => return rec.fail(FailureReason::Io, msg),
            Err(MeshError::Render(failure, diag)) => {
                rec.renderable = Some(false);
                let reason = if failure == RenderFailure::Timeout {
                    FailureReason::Timeout
                } else {
                    FailureReason::Render
                };
                return rec.fail(reason, render_detail(&failure, &diag));
            }
        }
    };

    let gt_mesh = if let Some(stl) = &pair.gt_stl {
        read_stl(stl)
    } else if let Some(step) = &pair.gt_step {
        let parsed = std::fs::read(step)
            .map_err(|e| MeshError::Io(format!("{}: {e}", step.display())))
            .map(|b| String::from_utf8_lossy(&b).into_owned());
        match parsed {
            Ok(text) => match parse_step(&text) {
                Ok(_) => render(step, &scratch.join(format!("{}.gt.stl", pair.stem)), cfg.checker.as_ref()),
                Err(e) => return rec.fail(FailureReason::GtParse, e.to_string()),
            },
            Err(e) => Err(e),
        }
    } else {
        Err(MeshError::Io("no ground-truth file".into()))
    };
    let gt_mesh = match gt_mesh {
        Ok(mesh) => mesh,
        Err(MeshError::Checker(msg)) => return rec.fail(FailureReason::CheckerUnavailable, msg),
        Err(MeshError::Io(msg)) => return rec.fail(FailureReason::Io, msg),
        Err(MeshError::Render(failure, diag)) => {
            return rec.fail(FailureReason::GtRender, render_detail(&failure, &diag));
        }
    };

    match scaled_chamfer(&pred_mesh, &gt_mesh, &cfg.geometry) {
        Ok(r) => {
            rec.scd = Some(r.scd);
            rec.reward = geometric_reward(r.scd, &cfg.geometry.thresholds).ok();
            rec.geometry = Some(PairGeometry {
                cd: r.cd,
                gt_scale: r.gt_scale,
                pred_scale: r.pred_scale,
                stage_residuals: r.alignment.stage_residuals,
                icp_iterations: r.alignment.icp_iterations,
            });
            rec
        }
        Err(e @ GeometryError::RegistrationFailed(_)) => rec.fail(FailureReason::Registration, e.to_string()),
        Err(e) => rec.fail(FailureReason::Degenerate, e.to_string()),
    }
}

/// Pairs STEP predictions with ground truth by file stem. A ground-truth
/// stem may be backed by a STEP file, an STL mesh, or both. Returns the pairs
/// and the stems found on only one side.
pub fn pair_directories(pred_dir: &Path, gt_dir: &Path) -> Result<(Vec<PairPaths>, Vec<String>, Vec<String>), EvalError> {
    let list = |dir: &Path| -> Result<Vec<PathBuf>, EvalError> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(|e| EvalError::Io(format!("{}: {e}", dir.display())))? {
            let path = entry.map_err(|e| EvalError::Io(e.to_string()))?.path();
            if path.is_file() {
                out.push(path);
            }
        }
        Ok(out)
    };
    let stem = |p: &Path| p.file_stem().map(|s| s.to_string_lossy().into_owned());

    let mut preds: BTreeMap<String, PathBuf> = BTreeMap::new();
    for p in list(pred_dir)?.into_iter().filter(|p| is_step(p)) {
        if let Some(s) = stem(&p) {
            // `.step` wins over `.stp` for a duplicated stem.
            let keep = preds.get(&s).is_some_and(|old| old.extension().is_some_and(|e| e.eq_ignore_ascii_case("step")));
            if !keep {
                preds.insert(s, p);
            }
        }
    }
    let mut gt_step: BTreeMap<String, PathBuf> = BTreeMap::new();
    let mut gt_stl: BTreeMap<String, PathBuf> = BTreeMap::new();
    for p in list(gt_dir)? {
        let Some(s) = stem(&p) else { continue };
        if is_step(&p) {
            let keep = gt_step.get(&s).is_some_and(|old| old.extension().is_some_and(|e| e.eq_ignore_ascii_case("step")));
            if !keep {
                gt_step.insert(s, p);
            }
        } else if is_stl(&p) {
            gt_stl.insert(s, p);
        }
    }

    let mut pairs = Vec::new();
    let mut unpaired_pred = Vec::new();
    for (s, pred) in preds.iter() {
        if gt_step.contains_key(s) || gt_stl.contains_key(s) {
            pairs.push(PairPaths {
                stem: s.clone(),
                pred: pred.clone(),
                gt_step: gt_step.get(s).cloned(),
                gt_stl: gt_stl.get(s).cloned(),
            });
        } else {
            unpaired_pred.push(s.clone());
        }
    }
    let unpaired_gt: Vec<String> = gt_step
        .keys()
        .chain(gt_stl.keys())
        .filter(|s| !preds.contains_key(*s))
        .cloned()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    Ok((pairs, unpaired_pred, unpaired_gt))
}

pub type ProgressFn<'a> = dyn Fn(usize, usize, &PairRecord) + Sync + 'a;

pub fn batch_evaluate(pred_dir: &Path, gt_dir: &Path, cfg: &BatchConfig) -> Result<EvalReport, EvalError> {
    batch_evaluate_with_progress(pred_dir, gt_dir, cfg, None)
}

/// Evaluates every stem-matched pair on a pool of `cfg.jobs` threads.
/// `progress` is called after each pair with (finished, total, record).
pub fn batch_evaluate_with_progress(
    pred_dir: &Path,
    gt_dir: &Path,
    cfg: &BatchConfig,
    progress: Option<&ProgressFn<'_>>,
) -> Result<EvalReport, EvalError> {
    if let Some(spec) = &cfg.checker {
        spec.validate()?;
    }
    cfg.geometry.validate().map_err(EvalError::Geometry)?;
    let (pairs, unpaired_pred, unpaired_gt) = pair_directories(pred_dir, gt_dir)?;
    if pairs.is_empty() {
        return Err(EvalError::NoPairsFound {
            pred_dir: pred_dir.display().to_string(),
            gt_dir: gt_dir.display().to_string(),
        });
    }
    let scratch = tempfile::tempdir().map_err(|e| EvalError::Io(format!("creating scratch directory: {e}")))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| EvalError::Io(format!("building worker pool: {e}")))?;
    let done = std::sync::atomic::AtomicUsize::new(0);
    let total = pairs.len();
    let records: Vec<PairRecord> = pool.install(|| {
        pairs
            .par_iter()
            .map(|pair| {
                let rec = evaluate_pair(pair, cfg, scratch.path());
                let n = done.fetch_add(1, std::sync::atomic::Ordering::SeqCst) + 1;
                if let Some(cb) = progress {
                    cb(n, total, &rec);
                }
                rec
            })
            .collect()
    });
    let mut report = EvalReport::from_records(records)?;
    report.unpaired_pred = unpaired_pred;
    report.unpaired_gt = unpaired_gt;
    Ok(report)
}
