mod common;

use common::{censor, draw, eos, family, mean, se_mean, variance};
use lshazard::{
    ls_estimate, mml_estimate, CensoredMml, CompleteMml, FamilySpec, MmlOptions, ObservedSample,
    ParamEstimate,
};
use proptest::prelude::*;

fn check_affine(before: &ParamEstimate<f64>, after: &ParamEstimate<f64>, a: f64, b: f64) -> Result<(), TestCaseError> {
    let scale = a.abs() + b * (before.mu_hat.abs() + before.sigma_hat);
    prop_assert!((after.mu_hat - (a + b * before.mu_hat)).abs() <= 1e-10 * scale);
    prop_assert!((after.sigma_hat - b * before.sigma_hat).abs() <= 1e-10 * b * before.sigma_hat);
    prop_assert_eq!(after.m_eff, before.m_eff);
    Ok(())
}

fn specs() -> [FamilySpec; 3] {
    [FamilySpec::sts(2, 0.0), FamilySpec::sts(3, 1.0), FamilySpec::lts(3.0)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn affine_equivariance(seed in 0u64..1_000_000, j in 0usize..3, a in -100.0f64..100.0, b in 0.01f64..100.0, r in 8usize..=20) {
        let f = family(specs()[j]);
        let m = eos(&f, 20);
        let xs = draw(&f, 20, seed, 0);
        let opts = MmlOptions::default();
        let complete = ObservedSample::complete(xs.clone()).unwrap();
        let moved = complete.affine(a, b).unwrap();
        check_affine(&ls_estimate(&complete, &f).unwrap(), &ls_estimate(&moved, &f).unwrap(), a, b)?;
        check_affine(
            &mml_estimate(&complete, &f, &m, &opts).unwrap(),
            &mml_estimate(&moved, &f, &m, &opts).unwrap(),
            a, b,
        )?;
        let cens = censor(&xs, r);
        let cens_moved = cens.affine(a, b).unwrap();
        check_affine(
            &mml_estimate(&cens, &f, &m, &opts).unwrap(),
            &mml_estimate(&cens_moved, &f, &m, &opts).unwrap(),
            a, b,
        )?;
    }

    #[test]
    fn censored_with_all_observed_is_complete(seed in 0u64..1_000_000, j in 0usize..3) {
        let f = family(specs()[j]);
        let m = eos(&f, 15);
        let sample = ObservedSample::complete(draw(&f, 15, seed, 1)).unwrap();
        let opts = MmlOptions::default();
        let full = CompleteMml::new(&f, &m, opts).unwrap().fit(&sample).unwrap();
        let cens = CensoredMml::new(&f, &m, 15, opts).unwrap().fit(&sample).unwrap();
        prop_assert_eq!(full, cens);
    }
}

#[test]
fn scale_is_positive_under_stress() {
    for spec in [FamilySpec::sts(2, 0.0), FamilySpec::lts(3.0)] {
        let f = family(spec);
        let m = eos(&f, 10);
        let mml = CompleteMml::new(&f, &m, MmlOptions::default()).unwrap();
        let mut failures = 0;
        for id in 0..1_000_000u64 {
            let xs = draw(&f, 10, 21, id);
            match mml.fit_values(&xs, true) {
                Ok(e) => assert!(e.sigma_hat > 0.0 && e.sigma_hat.is_finite(), "{spec} replicate {id}"),
                Err(_) => failures += 1,
            }
        }
        assert_eq!(failures, 0, "{spec}");
    }
}

#[test]
fn mml_location_is_more_efficient_than_mean() {
    for spec in [FamilySpec::sts(2, 0.0), FamilySpec::lts(3.0)] {
        let f = family(spec);
        let m = eos(&f, 20);
        let mml = CompleteMml::new(&f, &m, MmlOptions::default()).unwrap();
        let (mut mus, mut means) = (Vec::new(), Vec::new());
        for id in 0..40_000u64 {
            let xs = draw(&f, 20, 22, id);
            mus.push(mml.fit_values(&xs, true).unwrap().mu_hat);
            means.push(mean(&xs));
        }
        let (vm, vl) = (variance(&mus), variance(&means));
        assert!(vm < vl * 1.01, "{spec}: MML {vm} vs LS {vl}");
    }
}

#[test]
fn bias_and_rmse_shrink_with_n() {
    let f = family(FamilySpec::sts(2, 0.0));
    let mut last_rmse = (f64::INFINITY, f64::INFINITY);
    for n in [20, 50, 200, 1000] {
        let m = eos(&f, n);
        let mml = CompleteMml::new(&f, &m, MmlOptions::default()).unwrap();
        let (mut mus, mut sigmas) = (Vec::new(), Vec::new());
        for id in 0..2_000u64 {
            let e = mml.fit_values(&draw(&f, n, 23, id), true).unwrap();
            mus.push(e.mu_hat);
            sigmas.push(e.sigma_hat);
        }
        let rmse = |xs: &[f64], target: f64| (xs.iter().map(|x| (x - target).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
        let now = (rmse(&mus, 0.0), rmse(&sigmas, 1.0));
        assert!(now.0 < last_rmse.0 && now.1 < last_rmse.1, "n={n}: {now:?} vs {last_rmse:?}");
        assert!(mean(&mus).abs() < 3.0 * se_mean(&mus), "n={n}: location bias");
        last_rmse = now;
    }
}

#[test]
fn censored_estimates_track_maximum_likelihood() {
    let f = family(FamilySpec::sts(2, 0.0));
    let m = eos(&f, 20);
    let r = 16;
    let mml = CensoredMml::new(&f, &m, r, MmlOptions::default()).unwrap();
    // ML divides by r where MML divides by sqrt(r (r - 1)).
    let dof = (r as f64 / (r as f64 - 1.0)).sqrt();
    let (mut mu_mml, mut sigma_mml, mut mu_ml, mut sigma_ml) = (vec![], vec![], vec![], vec![]);
    for id in 0..1_000u64 {
        let s = censor(&draw(&f, 20, 24, id), r);
        let e = mml.fit(&s).unwrap();
        let (mu, sigma) = common::censored_ml(&f, &s, &e);
        mu_mml.push(e.mu_hat);
        sigma_mml.push(e.sigma_hat);
        mu_ml.push(mu);
        sigma_ml.push(sigma * dof);
    }
    let unpaired = |a: &[f64], b: &[f64]| (se_mean(a).powi(2) + se_mean(b).powi(2)).sqrt();
    assert!(mean(&mu_mml).abs() < 0.03, "{}", mean(&mu_mml));
    assert!((mean(&mu_mml) - mean(&mu_ml)).abs() < 3.0 * unpaired(&mu_mml, &mu_ml));
    assert!((mean(&sigma_mml) - mean(&sigma_ml)).abs() < 3.0 * unpaired(&sigma_mml, &sigma_ml));
}

#[test]
fn sample_files_parse() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.txt");
    std::fs::write(&path, "#censored n=6\n0.5\n-1\n# note\n2\n\n").unwrap();
    let s = ObservedSample::<f64>::from_file(&path).unwrap();
    assert_eq!((s.n(), s.r()), (6, 3));
    assert_eq!(s.values(), &[-1.0, 0.5, 2.0]);
    std::fs::write(&path, "1\nabc\n").unwrap();
    assert!(ObservedSample::<f64>::from_file(&path).is_err());
}

