use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::json;
use stepkit_core::eval::{
    batch_evaluate_with_progress, entity_stats_with, entity_table, evaluate_pair, BatchConfig, FailureReason,
    PairPaths, PairRecord,
};
use stepkit_core::geometry::{geometric_reward, GeometryConfig, RewardThresholds};
use stepkit_core::graph::{build_graph, detect_cycles, find_roots};
use stepkit_core::reserialize::{reserialize_dfs, reserialize_with_map, verify_equivalence, ReserializeOptions};
use stepkit_core::retrieval::{
    assemble_prompt, build_index, prepare_retrieved_step, query_nearest, read_caption_file, resolve_step_ref,
    Embedder, Exclude, Index, LocalEmbedder, PromptTemplate, RemoteEmbedder,
};
use stepkit_core::step::{check_completion, parse_step, serialize_step, StepFile};

use crate::config::Config;
use crate::{CheckerArgs, Cli, Command, GeometryArgs, IndexCommand, Usage};

pub fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = Config::load(cli.config.as_deref())?;
    let json = cli.json;
    match cli.command {
        Command::Parse { file } => parse(&file, json),
        Command::Reserialize {
            input,
            output,
            id_map,
            sig_digits,
            no_annotate,
            root_order,
        } => {
            let mut opts = cfg.reserialize;
            if let Some(d) = sig_digits {
                opts.sig_digits = d;
            }
            if no_annotate {
                opts.annotate = false;
            }
            if let Some(o) = root_order {
                opts.root_order = o;
            }
            opts.validate().map_err(|e| Usage(e.to_string()))?;
            reserialize(&input, output.as_deref(), id_map.as_deref(), &opts, json)
        }
        Command::Roundtrip { first, second } => roundtrip(&first, second.as_deref(), &cfg.reserialize, json),
        Command::Filter { paths, max_entities } => {
            let max = max_entities.unwrap_or(cfg.limits.max_entities);
            if max == 0 {
                bail!(Usage("--max-entities must be positive".into()));
            }
            filter(&paths, max, json)
        }
        Command::Stats {
            paths,
            label,
            bin_width,
            histogram_end,
            histogram_csv,
        } => {
            if bin_width == 0 {
                bail!(Usage("--bin-width must be positive".into()));
            }
            stats(&paths, &label, bin_width, histogram_end, histogram_csv.as_deref(), json)
        }
        Command::Metrics {
            pred,
            gt,
            geometry,
            checker,
        } => {
            let bc = batch_config(&cfg, &geometry, &checker, None)?;
            metrics(&pred, &gt, &bc, json)
        }
        Command::Reward {
            scd,
            delta_low,
            delta_high,
        } => {
            let t = thresholds(&cfg.geometry, delta_low, delta_high)?;
            if !(scd >= 0.0 && scd.is_finite()) {
                bail!(Usage(format!("--scd must be a finite non-negative number, got {scd}")));
            }
            let reward = geometric_reward(scd, &t)?;
            if json {
                println!("{}", json!({ "scd": scd, "reward": reward }));
            } else {
                println!("{reward}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Batch {
            pred,
            gt,
            output,
            csv,
            jobs,
            strict,
            geometry,
            checker,
        } => {
            let bc = batch_config(&cfg, &geometry, &checker, jobs)?;
            batch(&pred, &gt, output.as_deref(), csv.as_deref(), &bc, strict)
        }
        Command::Index(IndexCommand::Build {
            captions,
            output,
            endpoint,
            model,
            dimension,
        }) => {
            let embedder = match endpoint.or_else(|| cfg.index.endpoint.clone()) {
                Some(endpoint) => {
                    let mut r = RemoteEmbedder::new(endpoint, model.unwrap_or_else(|| cfg.index.model.clone()));
                    r.timeout = Duration::from_secs_f64(cfg.index.timeout_s);
                    r.max_retries = cfg.index.retries;
                    Embedder::Remote(r)
                }
                None => Embedder::Local(
                    LocalEmbedder::new(dimension.unwrap_or(cfg.index.dimension)).map_err(|e| Usage(e.to_string()))?,
                ),
            };
            let entries = read_caption_file(&captions)?;
            let index = build_index(&entries, &embedder)?;
            index.save(&output)?;
            let summary = json!({ "rows": index.len(), "dimension": index.dimension(), "output": output });
            if json {
                println!("{summary}");
            } else {
                eprintln!("indexed {} captions ({} dimensions) into {}", index.len(), index.dimension(), output.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Index(IndexCommand::Query {
            index,
            caption,
            k,
            exclude_self,
        }) => {
            let k = k.unwrap_or(cfg.index.k);
            if k == 0 {
                bail!(Usage("-k must be at least 1".into()));
            }
            let index = Index::load(&index)?;
            let embedder = Embedder::from_descriptor(index.embedder())?;
            let exclude = if exclude_self { Exclude::SameCaption } else { Exclude::Nothing };
            let hits = query_nearest(&index, &caption, &embedder, k, exclude)?;
            if json {
                let rows: Vec<_> = hits
                    .iter()
                    .map(|h| json!({ "row": h.row, "score": h.score, "caption": h.entry.caption, "step_ref": h.entry.step_ref }))
                    .collect();
                println!("{}", serde_json::Value::Array(rows));
            } else {
                for h in &hits {
                    println!("{:.6}\t{}\t{}", h.score, h.entry.caption, h.entry.step_ref);
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Prompt {
            caption,
            index,
            no_rag,
            for_training,
            template,
            instruction,
            raw_step,
            output,
        } => {
            let mut tpl = match template {
                Some(p) => PromptTemplate {
                    text: std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?,
                    ..PromptTemplate::default()
                },
                None => PromptTemplate::default(),
            };
            if let Some(i) = instruction {
                tpl.instruction = i;
            }
            tpl.validate().map_err(|e| Usage(e.to_string()))?;
            let retrieved = if no_rag {
                None
            } else {
                let path = index.expect("clap requires --index without --no-rag");
                Some(retrieve(&path, &caption, for_training, raw_step, &cfg.reserialize)?)
            };
            let text = assemble_prompt(&caption, retrieved.as_deref(), &tpl)?;
            write_or_print(output.as_deref(), &text)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

fn read_step(path: &Path) -> Result<StepFile> {
    parse_step(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse(path: &Path, json: bool) -> Result<ExitCode> {
    let text = read_text(path)?;
    let file = parse_step(&text).with_context(|| format!("parsing {}", path.display()))?;
    let graph = build_graph(&file)?;
    let mut types: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &file.entities {
        *types.entry(e.type_name.as_str()).or_default() += 1;
    }
    let report = json!({
        "path": path,
        "complete": check_completion(&text),
        "entities": file.entity_count(),
        "header_records": file.header.len(),
        "complex_entities": file.entities.iter().filter(|e| e.is_complex()).count(),
        "references": graph.edge_count(),
        "roots": find_roots(&graph).len(),
        "cycles": detect_cycles(&graph).len(),
        "types": types,
    });
    if json {
        println!("{report}");
    } else {
        println!("{}", serde_json::to_string_pretty(&report)?);
    }
    Ok(ExitCode::SUCCESS)
}

fn reserialize(
    input: &Path,
    output: Option<&Path>,
    id_map: Option<&Path>,
    opts: &ReserializeOptions,
    json: bool,
) -> Result<ExitCode> {
    let file = read_step(input)?;
    let r = reserialize_with_map(&file, opts).with_context(|| format!("reserializing {}", input.display()))?;
    let text = serialize_step(&r.file)?;
    if let Some(p) = id_map {
        std::fs::write(p, serde_json::to_string_pretty(&r.id_map)? + "\n")
            .with_context(|| format!("writing {}", p.display()))?;
    }
    match output {
        Some(p) => {
            std::fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?;
            if json {
                println!("{}", json!({ "entities": r.file.entity_count(), "output": p }));
            }
        }
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn roundtrip(first: &Path, second: Option<&Path>, opts: &ReserializeOptions, json: bool) -> Result<ExitCode> {
    let a = read_step(first)?;
    let (report, ok) = match second {
        Some(second) => {
            let b = read_step(second)?;
            let eq = verify_equivalence(&a, &b)?;
            (json!({ "equivalent": eq }), eq)
        }
        None => {
            let again = parse_step(&serialize_step(&a)?)?;
            let structural = again == a;
            let reserialized = parse_step(&serialize_step(&reserialize_dfs(&a, opts)?)?)?;
            let eq = verify_equivalence(&a, &reserialized)?;
            (json!({ "structural_roundtrip": structural, "equivalent": eq }), structural && eq)
        }
    };
    if json {
        println!("{report}");
    } else {
        println!("{}", if ok { "ok" } else { "MISMATCH" });
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn is_step_path(p: &Path) -> bool {
    p.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("step") || e.eq_ignore_ascii_case("stp"))
}

/// Files named directly, plus the `.step`/`.stp` files inside named
/// directories, in sorted order.
fn collect_step_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found = Vec::new();
            for entry in std::fs::read_dir(p).with_context(|| format!("listing {}", p.display()))? {
                let path = entry?.path();
                if path.is_file() && is_step_path(&path) {
                    found.push(path);
                }
            }
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn entity_counts(files: &[PathBuf]) -> Vec<(PathBuf, Result<usize>)> {
    files.iter().map(|p| (p.clone(), read_step(p).map(|f| f.entity_count()))).collect()
}

fn filter(paths: &[PathBuf], max: usize, json: bool) -> Result<ExitCode> {
    let files = collect_step_files(paths)?;
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    let mut errors = Vec::new();
    for (path, count) in entity_counts(&files) {
        match count {
            Ok(n) if n < max => kept.push(json!({ "path": path, "entities": n })),
            Ok(n) => rejected.push(json!({ "path": path, "entities": n })),
            Err(e) => {
                eprintln!("stepkit: skipping {}: {e:#}", path.display());
                errors.push(json!({ "path": path, "error": format!("{e:#}") }));
            }
        }
    }
    if json {
        println!(
            "{}",
            json!({ "max_entities": max, "kept": kept, "rejected": rejected, "errors": errors })
        );
    } else {
        for k in &kept {
            println!("{}", k["path"].as_str().unwrap_or_default());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn stats(paths: &[PathBuf], label: &str, bin_width: usize, end: usize, csv: Option<&Path>, json: bool) -> Result<ExitCode> {
    let files = collect_step_files(paths)?;
    let mut counts = Vec::new();
    for (path, count) in entity_counts(&files) {
        match count {
            Ok(n) => counts.push(n),
            Err(e) => eprintln!("stepkit: skipping {}: {e:#}", path.display()),
        }
    }
    if counts.is_empty() {
        bail!("no parseable STEP files");
    }
    let s = entity_stats_with(&counts, bin_width, end)?;
    if let Some(p) = csv {
        std::fs::write(p, s.histogram.to_csv()).with_context(|| format!("writing {}", p.display()))?;
    }
    if json {
        println!("{}", json!({ "label": label, "stats": s }));
    } else {
        print!("{}", entity_table(&[(label, &s)]));
    }
    Ok(ExitCode::SUCCESS)
}

fn thresholds(g: &GeometryConfig, low: Option<f64>, high: Option<f64>) -> Result<RewardThresholds, Usage> {
    let t = RewardThresholds {
        delta_low: low.unwrap_or(g.thresholds.delta_low),
        delta_high: high.unwrap_or(g.thresholds.delta_high),
    };
    t.validate().map_err(|e| Usage(e.to_string()))?;
    Ok(t)
}

fn batch_config(cfg: &Config, g: &GeometryArgs, c: &CheckerArgs, jobs: Option<usize>) -> Result<BatchConfig, Usage> {
    let mut geometry = cfg.geometry;
    if let Some(n) = g.n_points {
        geometry.n_points = n;
    }
    if let Some(s) = g.seed {
        geometry.seed = s;
    }
    geometry.thresholds = thresholds(&geometry, g.delta_low, g.delta_high)?;
    geometry.validate().map_err(|e| Usage(e.to_string()))?;
    Ok(BatchConfig {
        checker: cfg.checker(c.checker_cmd.as_deref(), c.timeout_s)?,
        geometry,
        jobs: jobs.unwrap_or(cfg.limits.jobs),
    })
}

/// Failure categories of the `metrics --json` contract.
fn contract_reason(r: FailureReason) -> &'static str {
    match r {
        FailureReason::Io | FailureReason::Parse | FailureReason::GtParse => "parse",
        FailureReason::Timeout => "timeout",
        FailureReason::Registration => "registration",
        FailureReason::CheckerUnavailable
        | FailureReason::Render
        | FailureReason::GtRender
        | FailureReason::Degenerate => "render",
    }
}

#[derive(Serialize)]
struct MetricsOutput {
    scd: Option<f64>,
    reward: f64,
    cd: Option<f64>,
    scale_factor: Option<f64>,
    pred_scale_factor: Option<f64>,
    stage_residuals: Option<[f64; 3]>,
    icp_iterations: Option<usize>,
    failure_reason: Option<&'static str>,
    detail: Option<String>,
}

impl From<&PairRecord> for MetricsOutput {
    fn from(r: &PairRecord) -> Self {
        let g = r.geometry.as_ref();
        MetricsOutput {
            scd: r.scd,
            reward: r.reward.unwrap_or(0.0),
            cd: g.map(|g| g.cd),
            scale_factor: g.map(|g| g.gt_scale),
            pred_scale_factor: g.map(|g| g.pred_scale),
            stage_residuals: g.map(|g| g.stage_residuals),
            icp_iterations: g.map(|g| g.icp_iterations),
            failure_reason: r.failure_reason.map(contract_reason),
            detail: r
                .failure_reason
                .map(|f| format!("{}: {}", f.as_str(), r.detail.as_deref().unwrap_or(""))),
        }
    }
}

fn metrics(pred: &Path, gt: &Path, bc: &BatchConfig, json: bool) -> Result<ExitCode> {
    let gt_is_stl = gt.extension().is_some_and(|e| e.eq_ignore_ascii_case("stl"));
    let pair = PairPaths {
        stem: "pair".into(),
        pred: pred.to_path_buf(),
        gt_step: (!gt_is_stl).then(|| gt.to_path_buf()),
        gt_stl: gt_is_stl.then(|| gt.to_path_buf()),
    };
    let scratch = tempfile::tempdir().context("creating scratch directory")?;
    let rec = evaluate_pair(&pair, bc, scratch.path());
    let out = MetricsOutput::from(&rec);
    if json {
        println!("{}", serde_json::to_string(&out)?);
    } else if let Some(scd) = out.scd {
        println!("scd={scd:e} reward={} cd={:e}", out.reward, out.cd.unwrap_or(f64::NAN));
    } else {
        println!("reward=0 failure={}", out.detail.as_deref().unwrap_or(""));
    }
    Ok(if rec.failure_reason.is_some() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn batch(pred: &Path, gt: &Path, output: Option<&Path>, csv: Option<&Path>, bc: &BatchConfig, strict: bool) -> Result<ExitCode> {
    let progress = |done: usize, total: usize, rec: &PairRecord| {
        let status = match (rec.failure_reason, rec.scd) {
            (Some(f), _) => format!("failed ({})", f.as_str()),
            (None, Some(scd)) => format!("scd={scd:.6}"),
            (None, None) => "ok".to_string(),
        };
        eprintln!("[{done}/{total}] {} {status}", rec.stem);
    };
    let report = batch_evaluate_with_progress(pred, gt, bc, Some(&progress))?;
    write_or_print(output, &(report.to_json() + "\n"))?;
    if let Some(p) = csv {
        std::fs::write(p, report.to_csv()).with_context(|| format!("writing {}", p.display()))?;
    }
    let a = &report.aggregates;
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    eprintln!(
        "pairs={} CR={:.4} RR={} MSCD={} AEC={}",
        a.total,
        a.cr,
        fmt(a.rr),
        fmt(a.mscd),
        fmt(a.aec_pred)
    );
    let failed = report.records.iter().any(|r| r.failure_reason.is_some());
    Ok(if strict && failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn retrieve(index_path: &Path, caption: &str, for_training: bool, raw: bool, opts: &ReserializeOptions) -> Result<String> {
    let index = Index::load(index_path)?;
    let embedder = Embedder::from_descriptor(index.embedder())?;
    let exclude = if for_training { Exclude::SameCaption } else { Exclude::Nothing };
    let hits = query_nearest(&index, caption, &embedder, 1, exclude)?;
    let Some(hit) = hits.first() else {
        bail!("no index entry left to retrieve after excluding the query caption");
    };
    let text = resolve_step_ref(&hit.entry.step_ref, index_path.parent())?;
    if raw {
        Ok(text)
    } else {
        Ok(prepare_retrieved_step(&text, opts)?)
    }
}
