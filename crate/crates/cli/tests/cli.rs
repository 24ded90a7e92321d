use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use stepkit_core::geometry::{shapes, write_stl_binary, TriMesh};

const CUBE_STEP: &str = include_str!("../../core/tests/data/cube.step");

fn stepkit(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_stepkit"));
    for var in [
        "STEPKIT_CONFIG",
        "STEPKIT_CHECKER_CMD",
        "STEPKIT_TIMEOUT_S",
        "STEPKIT_N_POINTS",
        "STEPKIT_SEED",
        "STEPKIT_JOBS",
        "STEPKIT_EMBED_ENDPOINT",
    ] {
        cmd.env_remove(var);
    }
    cmd.args(args).envs(env.iter().copied()).output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "{e}: stdout {:?} stderr {:?}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A mesher stand-in: copies `<mesh_dir>/<stem>.stl` to the output and fails
/// with status 3 when no such mesh exists.
struct Fixture {
    dir: tempfile::TempDir,
    checker: String,
}

impl Fixture {
    fn new() -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("meshes")).unwrap();
        let script = dir.path().join("mesher.sh");
        std::fs::write(
            &script,
            format!(
                "#!/bin/sh\nstem=$(basename \"$1\")\nstem=${{stem%.*}}\nsrc='{}'/\"$stem.stl\"\n\
                 [ -f \"$src\" ] || exit 3\ncp \"$src\" \"$2\"\n",
                dir.path().join("meshes").display()
            ),
        )
        .unwrap();
        let checker = format!("sh '{}' {{input}} {{output}}", script.display());
        Fixture { dir, checker }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn mesh(&self, stem: &str, mesh: &TriMesh) {
        std::fs::write(self.path("meshes").join(format!("{stem}.stl")), write_stl_binary(mesh)).unwrap();
    }

    fn file(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).unwrap();
        }
        std::fs::write(&p, text).unwrap();
        p
    }
}

#[test]
fn metrics_json_identical_shape() {
    let f = Fixture::new();
    f.mesh("pred", &shapes::l_bracket());
    let pred = f.file("pred.step", CUBE_STEP);
    let gt = f.path("gt.stl");
    std::fs::write(&gt, write_stl_binary(&shapes::l_bracket())).unwrap();
    let out = stepkit(&["metrics", "--json", "--pred", s(&pred), "--gt", s(&gt), "--checker-cmd", &f.checker], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert!(v["scd"].as_f64().unwrap() < 1e-6, "{v}");
    assert_eq!(v["reward"], 1.0);
    assert!(v["failure_reason"].is_null());
    assert!(v["scale_factor"].as_f64().unwrap() > 0.0);
    assert_eq!(v["stage_residuals"].as_array().unwrap().len(), 3);
}

#[test]
fn metrics_json_with_step_ground_truth() {
    let f = Fixture::new();
    f.mesh("pred", &shapes::cube(2.0));
    f.mesh("truth", &shapes::cube(10.0));
    let pred = f.file("pred.step", CUBE_STEP);
    let gt = f.file("truth.step", CUBE_STEP);
    let out = stepkit(&["--json", "metrics", "--pred", s(&pred), "--gt", s(&gt), "--checker-cmd", &f.checker], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["reward"], 1.0);
    let ratio = v["pred_scale_factor"].as_f64().unwrap() / v["scale_factor"].as_f64().unwrap();
    assert!((ratio - 0.2).abs() < 0.01, "{v}");
}

#[test]
fn metrics_failures_follow_the_contract() {
    let f = Fixture::new();
    let gt = f.path("gt.stl");
    std::fs::write(&gt, write_stl_binary(&shapes::cube(1.0))).unwrap();

    let truncated = f.file("cut.step", &CUBE_STEP[..CUBE_STEP.len() / 2]);
    let out = stepkit(&["metrics", "--json", "--pred", s(&truncated), "--gt", s(&gt), "--checker-cmd", &f.checker], &[]);
    assert_eq!(out.status.code(), Some(1));
    let v = stdout_json(&out);
    assert_eq!(v["reward"], 0.0);
    assert!(v["scd"].is_null());
    assert_eq!(v["failure_reason"], "parse");

    let unmeshable = f.file("nomesh.step", CUBE_STEP);
    let out = stepkit(&["metrics", "--json", "--pred", s(&unmeshable), "--gt", s(&gt), "--checker-cmd", &f.checker], &[]);
    assert_eq!(out.status.code(), Some(1));
    let v = stdout_json(&out);
    assert_eq!(v["reward"], 0.0);
    assert_eq!(v["failure_reason"], "render");

    let slow = format!("sleep 20; {}", f.checker);
    let out = stepkit(
        &["metrics", "--json", "--pred", s(&unmeshable), "--gt", s(&gt), "--checker-cmd", &slow, "--timeout-s", "0.5"],
        &[],
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout_json(&out)["failure_reason"], "timeout");
}

#[test]
fn reward_subcommand() {
    let out = stepkit(&["reward", "--scd", "0.255", "--json"], &[]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert!((v["reward"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    let out = stepkit(&["reward", "--scd", "0.001"], &[]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "1");
    let out = stepkit(&["reward", "--scd", "0.3", "--delta-low", "0.5", "--delta-high", "0.1"], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(stepkit(&["parse", "--no-such-flag", "x.step"], &[]).status.code(), Some(2));
    assert_eq!(stepkit(&["frobnicate"], &[]).status.code(), Some(2));
    let f = Fixture::new();
    let cfg = f.file("bad.toml", "[geometry]\nnpoints = 10\n");
    let step = f.file("a.step", CUBE_STEP);
    let out = stepkit(&["--config", s(&cfg), "parse", s(&step)], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("npoints"));
    assert_eq!(stepkit(&["filter", "--max-entities", "0", s(&step)], &[]).status.code(), Some(2));
    assert_eq!(stepkit(&["parse", s(&f.path("missing.step"))], &[]).status.code(), Some(1));
}

#[test]
fn parse_reports_counts() {
    let f = Fixture::new();
    let step = f.file("cube.step", CUBE_STEP);
    let out = stepkit(&["parse", "--json", s(&step)], &[]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["entities"], 169);
    assert_eq!(v["complete"], true);
    assert_eq!(v["cycles"], 0);
}

#[test]
fn reserialize_then_roundtrip() {
    let f = Fixture::new();
    let input = f.file("cube.step", CUBE_STEP);
    let output = f.path("cube.dfs.step");
    let map = f.path("cube.map.json");
    let out = stepkit(&["reserialize", s(&input), "-o", s(&output), "--id-map", s(&map)], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let written = std::fs::read_to_string(&output).unwrap();
    assert!(written.contains("/* STEPLLM branch"));
    let mut sorted: Vec<u64> = serde_json::from_str::<serde_json::Map<String, Value>>(&std::fs::read_to_string(&map).unwrap())
        .unwrap()
        .values()
        .map(|v| v.as_u64().unwrap())
        .collect();
    sorted.sort_unstable();
    assert_eq!(sorted, (1..=169).collect::<Vec<u64>>());

    let out = stepkit(&["roundtrip", "--json", s(&input), s(&output)], &[]);
    assert!(out.status.success());
    assert_eq!(stdout_json(&out)["equivalent"], true);
    let out = stepkit(&["roundtrip", s(&output)], &[]);
    assert!(out.status.success());

    let changed = f.file("changed.step", &CUBE_STEP.replacen("'Cube'", "'Box'", 1));
    assert_eq!(stepkit(&["roundtrip", s(&input), s(&changed)], &[]).status.code(), Some(1));
}

fn small_step(n: usize) -> String {
    let mut s = String::from("ISO-10303-21;\nHEADER;\nENDSEC;\nDATA;\n");
    for i in 1..=n {
        s.push_str(&format!("#{i}=CARTESIAN_POINT('',({i}.,0.,0.));\n"));
    }
    s + "ENDSEC;\nEND-ISO-10303-21;\n"
}

#[test]
fn filter_and_stats() {
    let f = Fixture::new();
    let a = f.file("set/a.step", &small_step(3));
    let b = f.file("set/b.step", &small_step(10));
    let c = f.file("set/c.step", &small_step(60));
    let out = stepkit(&["filter", "--max-entities", "10", s(&a), s(&b), s(&c)], &[]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().collect::<Vec<_>>(), vec![s(&a)]);

    let out = stepkit(&["--json", "stats", "--label", "set", s(&f.path("set"))], &[]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["stats"]["min"], 3);
    assert_eq!(v["stats"]["max"], 60);
    assert!((v["stats"]["avg"].as_f64().unwrap() - 73.0 / 3.0).abs() < 1e-12);
    let out = stepkit(&["stats", "--label", "set", s(&f.path("set"))], &[]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("| set | 24.33 | 3 | 60 |"));
}

#[test]
fn checker_precedence_flag_env_file() {
    let f = Fixture::new();
    f.mesh("pred", &shapes::cube(1.0));
    let pred = f.file("pred.step", CUBE_STEP);
    let gt = f.path("gt.stl");
    std::fs::write(&gt, write_stl_binary(&shapes::cube(1.0))).unwrap();
    let broken = "sh -c 'exit 3' {input} {output}";
    let cfg_bad = f.file("bad.toml", &format!("[checker]\ncommand = \"{broken}\"\n"));
    let cfg_good = f.file("good.toml", &format!("[checker]\ncommand = {:?}\n", f.checker));
    let run = |cfg: &Path, flag: Option<&str>, env: Option<&str>| {
        let mut args = vec!["--config", s(cfg), "metrics", "--json", "--pred", s(&pred), "--gt", s(&gt)];
        if let Some(c) = flag {
            args.extend(["--checker-cmd", c]);
        }
        let env: Vec<(&str, &str)> = env.map(|e| ("STEPKIT_CHECKER_CMD", e)).into_iter().collect();
        stdout_json(&stepkit(&args, &env))["reward"].as_f64().unwrap()
    };
    assert_eq!(run(&cfg_good, None, None), 1.0);
    assert_eq!(run(&cfg_bad, None, None), 0.0);
    assert_eq!(run(&cfg_bad, None, Some(&f.checker)), 1.0);
    assert_eq!(run(&cfg_good, None, Some(broken)), 0.0);
    assert_eq!(run(&cfg_bad, Some(&f.checker), Some(broken)), 1.0);
    assert_eq!(run(&cfg_good, Some(broken), Some(&f.checker)), 0.0);

    let via_env = stepkit(&["metrics", "--json", "--pred", s(&pred), "--gt", s(&gt)], &[("STEPKIT_CONFIG", s(&cfg_good))]);
    assert_eq!(stdout_json(&via_env)["reward"], 1.0);
}

#[test]
fn batch_report_and_strict_mode() {
    let f = Fixture::new();
    f.mesh("ok", &shapes::wedge());
    f.file("pred/ok.step", CUBE_STEP);
    f.file("pred/cut.step", &CUBE_STEP[..500]);
    std::fs::create_dir_all(f.path("gt")).unwrap();
    for stem in ["ok", "cut"] {
        std::fs::write(f.path(&format!("gt/{stem}.stl")), write_stl_binary(&shapes::wedge())).unwrap();
    }
    let report = f.path("report.json");
    let csv = f.path("report.csv");
    let (pred_dir, gt_dir) = (f.path("pred"), f.path("gt"));
    let base = [
        "batch",
        "--pred",
        s(&pred_dir),
        "--gt",
        s(&gt_dir),
        "--checker-cmd",
        &f.checker,
        "-o",
        s(&report),
        "--csv",
        s(&csv),
        "--jobs",
        "2",
    ];
    let out = stepkit(&base, &[]);
    assert!(out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("[2/2]"), "{stderr}");
    assert!(stderr.contains("CR=0.5000"), "{stderr}");
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["aggregates"]["cr"], 0.5);
    assert_eq!(v["aggregates"]["rr"], 0.5);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 3);

    let mut strict = base.to_vec();
    strict.push("--strict");
    assert_eq!(stepkit(&strict, &[]).status.code(), Some(1));
}

#[test]
fn index_query_and_prompt() {
    let f = Fixture::new();
    f.file("steps/cube.step", CUBE_STEP);
    f.file("steps/rod.step", &small_step(4));
    let lines = [
        serde_json::json!({"caption": "a ten millimetre cube", "step_ref": "steps/cube.step"}),
        serde_json::json!({"caption": "a thin round rod", "step_ref": "steps/rod.step"}),
        serde_json::json!({"caption": "a ten millimetre cube block", "step_ref": "steps/cube.step"}),
    ];
    let captions = f.file("captions.jsonl", &lines.iter().map(|l| l.to_string() + "\n").collect::<String>());
    let index = f.path("index.jsonl");
    let out = stepkit(&["index", "build", "--captions", s(&captions), "-o", s(&index), "--dimension", "256"], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = stepkit(&["--json", "index", "query", "--index", s(&index), "--caption", "thin rod", "-k", "2"], &[]);
    let hits = stdout_json(&out);
    assert_eq!(hits.as_array().unwrap().len(), 2);
    assert_eq!(hits[0]["caption"], "a thin round rod");
    assert_eq!(hits[0]["row"], 1);

    let out = stepkit(&["prompt", "--caption", "a thin round rod", "--no-rag"], &[]);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(out.status.success());
    assert!(text.contains("Caption: a thin round rod"));
    assert!(!text.contains("ISO-10303-21;"));

    let out = stepkit(&["prompt", "--caption", "a thin round rod", "--index", s(&index)], &[]);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("#4=CARTESIAN_POINT"), "{text}");

    let out = stepkit(&["prompt", "--caption", "a ten millimetre cube", "--index", s(&index), "--for-training"], &[]);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(text.contains("/* STEPLLM branch"), "reserialized cube expected");
    assert!(text.trim_end().ends_with("Caption: a ten millimetre cube"));

    assert_eq!(stepkit(&["prompt", "--caption", "x"], &[]).status.code(), Some(2));
}
