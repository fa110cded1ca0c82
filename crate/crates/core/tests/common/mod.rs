//! Helpers shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use lshazard::order_stats::OrderStatOptions;
use lshazard::rng::rng_stream;
use lshazard::{
    expected_order_stats, ExpectedOrderStats, Family, FamilySpec, LocScale, LocationScaleFamily,
    ObservedSample, OrderStatMethod, ParamEstimate,
};

pub fn family(spec: FamilySpec) -> Family<f64> {
    Family::new(spec).expect("valid family")
}

pub fn eos(family: &Family<f64>, n: usize) -> ExpectedOrderStats<f64> {
    expected_order_stats(family, n, OrderStatMethod::Quadrature, &OrderStatOptions::default())
        .expect("order statistics")
}

/// Sorted standard sample from replicate stream `id`.
pub fn draw(family: &Family<f64>, n: usize, seed: u64, id: u64) -> Vec<f64> {
    let mut rng = rng_stream(seed, id);
    family.sample(LocScale::standard(), n, &mut rng)
}

pub fn censor(values: &[f64], r: usize) -> ObservedSample<f64> {
    ObservedSample::new(values[..r].to_vec(), values.len()).expect("censored sample")
}

/// Log-likelihood of a Type-II right-censored sample.
pub fn censored_loglik(family: &Family<f64>, sample: &ObservedSample<f64>, mu: f64, sigma: f64) -> f64 {
    let (n, r) = (sample.n(), sample.r());
    let mut ll = -(r as f64) * sigma.ln();
    for &x in sample.values() {
        let f = family.pdf((x - mu) / sigma);
        if f <= 0.0 {
            return f64::NEG_INFINITY;
        }
        ll += f.ln();
    }
    if r < n {
        let s = family.sf((sample.last() - mu) / sigma);
        if s <= 0.0 {
            return f64::NEG_INFINITY;
        }
        ll += (n - r) as f64 * s.ln();
    }
    ll
}

/// Minimizes `f` over the plane by Nelder-Mead.
pub fn nelder_mead(f: impl Fn([f64; 2]) -> f64, start: [f64; 2], step: f64, tol: f64) -> [f64; 2] {
    let mut simplex = [start, [start[0] + step, start[1]], [start[0], start[1] + step]];
    let mut values = simplex.map(&f);
    for _ in 0..5000 {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);
        if (values[2] - values[0]).abs() <= tol * (1.0 + values[0].abs()) {
            break;
        }
        let c = [
            (simplex[0][0] + simplex[1][0]) / 2.0,
            (simplex[0][1] + simplex[1][1]) / 2.0,
        ];
        let along = |t: f64| [c[0] + t * (simplex[2][0] - c[0]), c[1] + t * (simplex[2][1] - c[1])];
        let xr = along(-1.0);
        let fr = f(xr);
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = f(xe);
            if fe < fr {
                simplex[2] = xe;
                values[2] = fe;
            } else {
                simplex[2] = xr;
                values[2] = fr;
            }
        } else if fr < values[1] {
            simplex[2] = xr;
            values[2] = fr;
        } else {
            let xc = if fr < values[2] { along(-0.5) } else { along(0.5) };
            let fc = f(xc);
            if fc < values[2].min(fr) {
                simplex[2] = xc;
                values[2] = fc;
            } else {
                for j in 1..3 {
                    simplex[j] = [
                        (simplex[0][0] + simplex[j][0]) / 2.0,
                        (simplex[0][1] + simplex[j][1]) / 2.0,
                    ];
                    values[j] = f(simplex[j]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    simplex[best]
}

/// Full maximum likelihood `(μ, σ)` of a censored sample, started at `start`.
pub fn censored_ml(family: &Family<f64>, sample: &ObservedSample<f64>, start: &ParamEstimate<f64>) -> (f64, f64) {
    let neg = |p: [f64; 2]| -censored_loglik(family, sample, p[0], p[1].exp());
    let step = 0.1 * start.sigma_hat;
    let p = nelder_mead(neg, [start.mu_hat, start.sigma_hat.ln()], step.max(1e-3), 1e-13);
    (p[0], p[1].exp())
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn se_mean(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}
