mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{draw, family};
use lshazard::{FamilySpec, LocationScaleFamily};

fn lshazard(args: &[&str], cache: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lshazard"))
        .args(args)
        .env("LSHAZARD_CACHE_DIR", cache)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_sample(dir: &Path, name: &str, header: &str, xs: &[f64]) -> String {
    let path = dir.join(name);
    let body: String = xs.iter().map(|x| format!("{x}\n")).collect();
    std::fs::write(&path, format!("{header}{body}")).unwrap();
    path.to_str().unwrap().to_string()
}

const STS: [&str; 6] = ["--family", "sts", "--r", "2", "--d", "0"];

fn with<'a>(base: &[&'a str], rest: &[&'a str]) -> Vec<&'a str> {
    base.iter().chain(rest).copied().collect()
}

#[test]
fn estimate_is_deterministic_at_six_decimals() {
    let dir = tempfile::tempdir().unwrap();
    let xs: Vec<f64> = draw(&family(FamilySpec::sts(2, 0.0)), 20, 7, 0).iter().map(|z| 10.0 + 2.0 * z).collect();
    let input = write_sample(dir.path(), "s.txt", "", &xs);
    let args = with(&["estimate"], &with(&STS, &["--input", &input]));
    let first = stdout(&lshazard(&args, dir.path()));
    let second = stdout(&lshazard(&args, dir.path()));
    assert_eq!(first, second);
    let mml = first.lines().find(|l| l.starts_with("MML")).unwrap();
    let fields: Vec<&str> = mml.split_whitespace().collect();
    assert_eq!(fields.len(), 4);
    for f in &fields[1..] {
        assert_eq!(f.split('.').nth(1).unwrap().len(), 6, "{f}");
    }
    assert!(first.lines().any(|l| l.starts_with("LS")));
}

#[test]
fn hazard_round_trips_through_estimate_json() {
    let dir = tempfile::tempdir().unwrap();
    let xs = draw(&family(FamilySpec::sts(2, 0.0)), 20, 8, 0);
    let input = write_sample(dir.path(), "s.txt", "", &xs);
    let before = std::fs::read(&input).unwrap();
    let json = stdout(&lshazard(&with(&["estimate"], &with(&STS, &["--input", &input, "--json"])), dir.path()));
    let est = dir.path().join("est.json");
    std::fs::write(&est, json).unwrap();
    let t = format!("{}", xs[10]);
    let base = with(&["hazard"], &with(&STS, &["--input", &input, "--t", &t, "--json"]));
    let one_shot = stdout(&lshazard(&base, dir.path()));
    let via_file = stdout(&lshazard(&with(&base, &["--estimate", est.to_str().unwrap()]), dir.path()));
    assert_eq!(one_shot, via_file);
    assert_eq!(std::fs::read(&input).unwrap(), before);

    let results: Vec<lshazard::HazardResult<f64>> = serde_json::from_str(&one_shot).unwrap();
    let f = family(FamilySpec::sts(2, 0.0));
    let m = common::eos(&f, 20);
    for r in &results {
        let (lo, hi) = (f.hazard(m.get(r.k)).unwrap(), f.hazard(m.get(r.k + 1)).unwrap());
        if (r.delta_hat - m.get(r.k)) * (r.delta_hat - m.get(r.k + 1)) <= 0.0 {
            assert!(lo.min(hi) <= r.hr2 && r.hr2 <= lo.max(hi));
        }
    }
}

#[test]
fn censored_hazard_and_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let xs = draw(&family(FamilySpec::lts(3.0)), 20, 9, 0);
    let input = write_sample(dir.path(), "c.txt", "#censored n=20\n", &xs[..15]);
    let lts = ["--family", "lts", "--p", "3"];
    let csv = stdout(&lshazard(&with(&["predict"], &with(&lts, &["--input", &input])), dir.path()));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "i,x_hat,method");
    assert_eq!(lines.len(), 6);
    assert!(lines[1].starts_with("16,") && lines[1].ends_with(",predictive_mml"));
    let spacings = stdout(&lshazard(&with(&["predict"], &with(&lts, &["--input", &input, "--predictor", "spacings"])), dir.path()));
    assert!(spacings.lines().nth(1).unwrap().ends_with(",spacings"));

    let t = format!("{}", xs[14] + 0.01);
    let out = stdout(&lshazard(&with(&["hazard"], &with(&lts, &["--input", &input, "--t", &t, "--json"])), dir.path()));
    let results: Vec<lshazard::HazardResult<f64>> = serde_json::from_str(&out).unwrap();
    assert_eq!(results.len(), 1);
    let far = lshazard(&with(&["hazard"], &with(&lts, &["--input", &input, "--t", "1e3"])), dir.path());
    assert_eq!(far.status.code(), Some(2));
    let far = lshazard(&with(&["hazard"], &with(&lts, &["--input", &input, "--t", "1e3", "--extrapolate"])), dir.path());
    assert!(stdout(&far).contains("extrapolated"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.txt");
    let o = lshazard(&with(&["estimate"], &with(&STS, &["--input", missing.to_str().unwrap()])), dir.path());
    assert_eq!(o.status.code(), Some(2));
    let flat = write_sample(dir.path(), "flat.txt", "", &[1.5; 10]);
    let o = lshazard(&with(&["estimate"], &with(&STS, &["--input", &flat])), dir.path());
    assert_eq!(o.status.code(), Some(3));
    let o = lshazard(&["estimate", "--family", "sts", "--r", "2", "--d", "3", "--input", &flat], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = lshazard(&["estimate", "--family", "lts", "--input", &flat], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"n\": 3").unwrap();
    let o = lshazard(&["simulate", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = lshazard(&["frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn tables_populate_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&lshazard(&with(&["tables"], &with(&STS, &["--n", "8", "9"])), dir.path()));
    assert_eq!(out.lines().count(), 2);
    assert!(dir.path().join("sts_r2_d0_n8.csv").exists());
    let again = stdout(&lshazard(&with(&["tables"], &with(&STS, &["--n", "8"])), dir.path()));
    assert!(again.contains("Hit"));
}

#[test]
fn simulate_is_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let run = |workers: &str| {
        let out = dir.path().join(format!("w{workers}"));
        stdout(&lshazard(
            &["simulate", "--preset", "table2", "--replicates", "3000", "--seed", "5", "--workers", workers, "--out", out.to_str().unwrap()],
            dir.path(),
        ));
        (std::fs::read(out.join("report.csv")).unwrap(), std::fs::read(out.join("report.json")).unwrap())
    };
    let one = run("1");
    assert_eq!(one, run("3"));
    let fig = dir.path().join("fig");
    stdout(&lshazard(&["figure", "--preset", "figure1", "--replicates", "2000", "--out", fig.to_str().unwrap()], dir.path()));
    let csv = std::fs::read_to_string(fig.join("figure.csv")).unwrap();
    assert_eq!(csv.lines().count(), 20);
}
