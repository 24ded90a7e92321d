mod common;

use stepkit_core::eval::{batch_evaluate, BatchConfig, EvalReport, FailureReason, RenderFailure};
use stepkit_core::eval::check_renderability;
use stepkit_core::geometry::GeometryConfig;

use common::{sorted_median, ten_pair_batch};

#[test]
fn constructed_batch_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let b = ten_pair_batch(dir.path());
    let cfg = BatchConfig {
        checker: Some(b.checker.clone()),
        geometry: GeometryConfig::default(),
        jobs: 4,
    };
    let report = batch_evaluate(&b.pred_dir, &b.gt_dir, &cfg).unwrap();
    assert_eq!(report.records.len(), 10);
    assert!(report.unpaired_pred.is_empty() && report.unpaired_gt.is_empty());

    for (rec, exp) in report.records.iter().zip(&b.expected) {
        assert_eq!(rec.stem, exp.stem);
        assert_eq!(rec.completed, exp.completed, "{}", rec.stem);
        assert_eq!(rec.renderable, Some(exp.renderable), "{}", rec.stem);
        assert_eq!(rec.entity_count, exp.entity_count, "{}", rec.stem);
        assert_eq!(rec.scd.is_some(), exp.has_scd, "{}: {:?}", rec.stem, rec.detail);
    }
    let reason = |stem: &str| report.records.iter().find(|r| r.stem == stem).unwrap().failure_reason;
    assert_eq!(reason("p05_truncated"), Some(FailureReason::Parse));
    assert_eq!(reason("p06_syntax"), Some(FailureReason::Parse));
    assert_eq!(reason("p07_nomesh"), Some(FailureReason::Render));
    assert_eq!(reason("p08_badmesh"), Some(FailureReason::Render));
    assert_eq!(reason("p09_timeout"), Some(FailureReason::Timeout));

    let scd = |stem: &str| report.records.iter().find(|r| r.stem == stem).unwrap().scd.unwrap();
    assert!(scd("p01_cube") < 1e-6);
    assert!(scd("p02_bracket") < 1e-6);
    assert!(scd("p10_wedge") < 1e-6);
    assert!(scd("p03_cylinder") < 0.01);
    assert!(scd("p04_stretched") > scd("p01_cube"));

    // Hand-computed: 9 of 10 files end with the terminator, 5 of 10 render,
    // parsed predictions have 12, 30, 45, 7, 20, 9, 15 and 60 entities.
    let a = &report.aggregates;
    assert_eq!(a.total, 10);
    assert_eq!(a.completed, 9);
    assert_eq!(a.cr, 0.9);
    assert_eq!(a.renderable, 5);
    assert_eq!(a.rr, Some(0.5));
    assert_eq!(a.scd_count, 5);
    assert_eq!(a.excluded_pairs, 5);
    assert_eq!(a.aec_pred, Some(198.0 / 8.0));
    assert_eq!(a.aec_gt, Some(33.0));
    let scds: Vec<f64> = report.records.iter().filter_map(|r| r.scd).collect();
    assert_eq!(a.mscd, sorted_median(&scds));

    let back = EvalReport::from_json(&report.to_json()).unwrap();
    assert_eq!(back, report);
    let csv = report.to_csv();
    assert_eq!(csv.lines().count(), 11);
}

#[test]
fn batch_is_deterministic_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let b = ten_pair_batch(dir.path());
    std::fs::remove_file(b.pred_dir.join("p09_timeout.step")).unwrap();
    let run = |jobs| {
        let cfg = BatchConfig {
            checker: Some(b.checker.clone()),
            geometry: GeometryConfig::default(),
            jobs,
        };
        batch_evaluate(&b.pred_dir, &b.gt_dir, &cfg).unwrap()
    };
    let one = run(1);
    assert_eq!(one.to_json(), run(3).to_json());
    assert_eq!(one.unpaired_gt, vec!["p09_timeout".to_string()]);
}

#[test]
fn missing_checker_binary_is_reported_as_unavailable() {
    let dir = tempfile::tempdir().unwrap();
    let step = dir.path().join("a.step");
    std::fs::write(&step, common::CUBE_STEP).unwrap();
    let spec = stepkit_core::eval::ExternalCheckerSpec::new("definitely-not-a-mesher-xyz {input} {output}", 5.0).unwrap();
    let err = check_renderability(&step, &dir.path().join("a.stl"), &spec).unwrap_err();
    assert!(matches!(err, stepkit_core::eval::EvalError::CheckerUnavailable(_)));

    let cfg = BatchConfig {
        checker: Some(spec),
        geometry: GeometryConfig::default(),
        jobs: 1,
    };
    let gt = dir.path().join("gt");
    std::fs::create_dir(&gt).unwrap();
    std::fs::write(gt.join("a.step"), common::CUBE_STEP).unwrap();
    let pred = dir.path().join("pred");
    std::fs::create_dir(&pred).unwrap();
    std::fs::write(pred.join("a.step"), common::CUBE_STEP).unwrap();
    let report = batch_evaluate(&pred, &gt, &cfg).unwrap();
    assert_eq!(report.records[0].failure_reason, Some(FailureReason::CheckerUnavailable));
}

#[test]
fn timeout_kills_the_checker_promptly() {
    let dir = tempfile::tempdir().unwrap();
    let step = dir.path().join("slow_timeout.step");
    std::fs::write(&step, common::CUBE_STEP).unwrap();
    let spec = common::fake_checker(dir.path(), dir.path(), 0.3);
    let start = std::time::Instant::now();
    let out = check_renderability(&step, &dir.path().join("out.stl"), &spec).unwrap();
    assert!(start.elapsed().as_secs_f64() < 5.0);
    assert_eq!(out.failure, Some(RenderFailure::Timeout));
    assert!(!out.renderable);
}
