mod common;

use lshazard::montecarlo::GridSpec;
use lshazard::{run_experiment, EstimatorKind, ExperimentConfig, FamilySpec, LocationScaleFamily};

fn config(replicates: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset("table1").unwrap();
    cfg.replicates = replicates;
    cfg.seed = 99;
    cfg
}

#[test]
fn standard_errors_shrink_like_root_replicates() {
    let (small, _) = run_experiment(&config(10_000), 0, None).unwrap();
    let (large, _) = run_experiment(&config(100_000), 0, None).unwrap();
    for (a, b) in small.rows.iter().zip(&large.rows) {
        for kind in EstimatorKind::ALL {
            let ratio = a.cell(kind).unwrap().se_mean / b.cell(kind).unwrap().se_mean;
            assert!((ratio / 10f64.sqrt() - 1.0).abs() < 0.1, "q={} {kind:?}: {ratio}", a.q);
        }
    }
}

#[test]
fn exact_column_is_analytic() {
    let (report, _) = run_experiment(&config(2_000), 0, None).unwrap();
    let f = common::family(FamilySpec::sts(2, 0.0));
    for row in &report.rows {
        let z = f.quantile(row.q).unwrap();
        assert_eq!(row.delta, z);
        assert_eq!(row.exact, f.hazard(z).unwrap());
    }
}

#[test]
fn mml_coverage_dominates_ls() {
    let (report, _) = run_experiment(&config(20_000), 0, None).unwrap();
    for row in &report.rows {
        let mml = row.cell(EstimatorKind::Hr2Mml).unwrap();
        let ls = row.cell(EstimatorKind::Hr2Ls).unwrap();
        assert!(
            mml.coverage.unwrap() + mml.se_coverage.unwrap() >= ls.coverage.unwrap(),
            "q={}",
            row.q
        );
    }
}

#[test]
fn reports_written_and_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("config.json");
    let mut cfg = ExperimentConfig::new(FamilySpec::lts(3.0), 12);
    cfg.quantile_grid = GridSpec::Values(vec![0.25, 0.5, 0.75]);
    cfg.replicates = 1_000;
    std::fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let loaded = ExperimentConfig::from_file(&cfg_path).unwrap();
    assert_eq!(loaded, cfg);
    let (report, timing) = run_experiment(&loaded, 2, None).unwrap();
    let out = dir.path().join("out");
    let written = report.write(&out, Some(&timing)).unwrap();
    assert_eq!(written.len(), 3);
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3);
    let back: lshazard::ExperimentReport =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(back, report);
}

#[test]
fn unknown_config_fields_are_rejected() {
    let text = r#"{"family": {"kind": "lts", "p": 3.0}, "n": 10, "replicas": 5}"#;
    assert!(ExperimentConfig::from_json(text).is_err());
}
