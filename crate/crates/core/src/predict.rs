//! Prediction of censored order statistics `x_(i)`, `r < i <= n`.
//!
//! Two predictors are offered. The predictive-MML one maximizes
//! `ln f(z_i) + (i-r-1) ln[F(z_i) - F(z_r)] + (n-i) ln[1 - F(z_i)]` over
//! `z_i` with `(μ̂, σ̂)` held at the censored MML estimates. Each nonlinear
//! term of the stationarity condition is replaced by a first-order expansion
//! around the expected order statistics, leaving a linear equation in `z_i`.
//! The spacings one averages `x_(j) + σ̂(t_i - t_j)` over the observed `j`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{ObservedSample, ParamEstimate};
use crate::families::{Family, LocationScaleFamily};
use crate::hazard::{bracket, Bracket};
use crate::order_stats::ExpectedOrderStats;
use crate::scalar::{from_usize, Real};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorMethod {
    #[default]
    PredictiveMml,
    Spacings,
}

impl std::fmt::Display for PredictorMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PredictorMethod::PredictiveMml => "predictive_mml",
            PredictorMethod::Spacings => "spacings",
        })
    }
}

/// Linear stationarity condition `num(z_r) / den` for one index.
#[derive(Clone, Copy, Debug)]
struct PredictorLine<T> {
    /// `a_i + (n-i) c_i - (i-r-1) γ`
    constant: T,
    /// `-(i-r-1) κ`, the coefficient of the observed `z_r`.
    slope_zr: T,
    /// `-b_i + (i-r-1) η - (n-i) e_i`
    den: T,
    anchor: T,
}

/// Precomputed predictive-MML coefficients for fixed `(family, n, r)`.
#[derive(Clone, Debug)]
pub struct MmlPredictor<T> {
    n: usize,
    r: usize,
    lines: Vec<PredictorLine<T>>,
}

impl<T: Real> MmlPredictor<T> {
    pub fn new<F: LocationScaleFamily<T>>(
        family: &F,
        m_vals: &ExpectedOrderStats<T>,
        r: usize,
    ) -> Result<Self> {
        let n = m_vals.n;
        if r < 1 || r >= n {
            return Err(Error::Domain(format!(
                "prediction needs 1 <= r < n (r = {r}, n = {n})"
            )));
        }
        let m_r = m_vals.get(r);
        let (f_r, cdf_r) = (family.pdf(m_r), family.cdf(m_r));
        let mut lines = Vec::with_capacity(n - r);
        for i in r + 1..=n {
            let m_i = m_vals.get(i);
            let psi = family.score(m_i);
            let b = family.score_derivative(m_i);
            let a = psi - m_i * b;
            let e = family.hazard_derivative(m_i)?;
            let c = family.hazard(m_i)? - m_i * e;
            let between: T = from_usize(i - r - 1);
            let after: T = from_usize(n - i);
            let (gamma, eta, kappa) = if i > r + 1 {
                let f_i = family.pdf(m_i);
                let gap = family.cdf(m_i) - cdf_r;
                if !(gap > T::zero()) {
                    return Err(Error::Domain(format!(
                        "F(m_{i}) - F(m_{r}) is not positive"
                    )));
                }
                let q = f_i / gap;
                let eta = -psi * f_i / gap - q * q;
                let kappa = f_i * f_r / (gap * gap);
                (q - eta * m_i - kappa * m_r, eta, kappa)
            } else {
                (T::zero(), T::zero(), T::zero())
            };
            lines.push(PredictorLine {
                constant: a + after * c - between * gamma,
                slope_zr: -(between * kappa),
                den: -b + between * eta - after * e,
                anchor: m_i,
            });
        }
        Ok(Self { n, r, lines })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// Clamped prediction of one `x_(i)`, with its (clamped, fallback) flags.
    fn predict_index(&self, x_r: T, est: &ParamEstimate<T>, i: usize) -> (T, bool, bool) {
        let line = &self.lines[i - self.r - 1];
        let z_r = (x_r - est.mu_hat) / est.sigma_hat;
        let (z, fell_back) = if line.den < T::zero() {
            ((line.constant + line.slope_zr * z_r) / line.den, false)
        } else {
            (line.anchor, true)
        };
        let x = est.mu_hat + est.sigma_hat * z;
        if x < x_r {
            (x_r, true, fell_back)
        } else {
            (x, false, fell_back)
        }
    }

    /// Predicts one `x_(i)`, clamped to at least `x_(r)`.
    pub fn predict_one(
        &self,
        sample: &ObservedSample<T>,
        est: &ParamEstimate<T>,
        i: usize,
    ) -> Result<T> {
        check_sample(sample, self.n, self.r)?;
        check_scale(est)?;
        check_index(i, self.n, self.r)?;
        Ok(self.predict_index(sample.last(), est, i).0)
    }

    /// Predicts every `x_(i)`, `r < i <= n`.
    pub fn predict(
        &self,
        sample: &ObservedSample<T>,
        est: &ParamEstimate<T>,
    ) -> Result<PredictedOrderStats<T>> {
        check_sample(sample, self.n, self.r)?;
        check_scale(est)?;
        let x_r = sample.last();
        let len = self.n - self.r;
        let (mut values, mut clamped, mut fallback) =
            (Vec::with_capacity(len), Vec::with_capacity(len), Vec::with_capacity(len));
        for i in self.r + 1..=self.n {
            let (x, c, f) = self.predict_index(x_r, est, i);
            values.push(x);
            clamped.push(c);
            fallback.push(f);
        }
        Ok(PredictedOrderStats::assemble(
            self.n,
            self.r,
            values,
            clamped,
            fallback,
            PredictorMethod::PredictiveMml,
        ))
    }
}

fn check_sample<T: Real>(sample: &ObservedSample<T>, n: usize, r: usize) -> Result<()> {
    if sample.n() != n || sample.r() != r {
        return Err(Error::Domain(format!(
            "predictor is for n = {n}, r = {r}; sample has n = {}, r = {}",
            sample.n(),
            sample.r()
        )));
    }
    Ok(())
}

fn check_scale<T: Real>(est: &ParamEstimate<T>) -> Result<()> {
    if !(est.sigma_hat >= T::zero()) {
        return Err(Error::Domain(format!("scale estimate {} is negative", est.sigma_hat)));
    }
    Ok(())
}

/// Predicted values `x̂_(r+1) <= ... <= x̂_(n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedOrderStats<T> {
    pub n: usize,
    pub r: usize,
    /// 1-based indices `r+1..=n`.
    pub indices: Vec<usize>,
    pub values: Vec<T>,
    pub method: PredictorMethod,
    /// The raw prediction fell below `x_(r)` and was raised to it.
    pub clamped: Vec<bool>,
    /// The linearized condition had no maximum and `μ̂ + σ̂ m_i` was used.
    pub fallback: Vec<bool>,
    /// A running maximum was applied to restore monotonicity.
    pub repaired: bool,
}

impl<T: Real> PredictedOrderStats<T> {
    fn assemble(
        n: usize,
        r: usize,
        mut values: Vec<T>,
        clamped: Vec<bool>,
        fallback: Vec<bool>,
        method: PredictorMethod,
    ) -> Self {
        let mut repaired = false;
        for j in 1..values.len() {
            if values[j] < values[j - 1] {
                values[j] = values[j - 1];
                repaired = true;
            }
        }
        Self {
            n,
            r,
            indices: (r + 1..=n).collect(),
            values,
            method,
            clamped,
            fallback,
            repaired,
        }
    }

    /// `x̂_(i)` for `r < i <= n`.
    pub fn get(&self, i: usize) -> Result<T> {
        if i <= self.r || i > self.n {
            return Err(Error::Index {
                index: i,
                reason: format!("predictions cover {}..={}", self.r + 1, self.n),
            });
        }
        Ok(self.values[i - self.r - 1])
    }

    /// Observed values followed by the predictions: a full ordered sample of size `n`.
    pub fn combined(&self, observed: &ObservedSample<T>) -> Vec<T> {
        let mut all = observed.values().to_vec();
        all.extend_from_slice(&self.values);
        all
    }
}

fn check_index(i: usize, n: usize, r: usize) -> Result<()> {
    if i <= r || i > n {
        return Err(Error::Index {
            index: i,
            reason: format!("prediction needs r < i <= n (r = {r}, n = {n})"),
        });
    }
    Ok(())
}

/// Predictive-MML prediction of a single `x_(i)`, clamped to at least `x_(r)`.
pub fn predict_order_stat_mml<T: Real>(
    sample: &ObservedSample<T>,
    family: &Family<T>,
    m_vals: &ExpectedOrderStats<T>,
    est: &ParamEstimate<T>,
    i: usize,
) -> Result<T> {
    check_index(i, sample.n(), sample.r())?;
    MmlPredictor::new(family, m_vals, sample.r())?.predict_one(sample, est, i)
}

/// Spacings prediction `mean(x_(1..r)) + σ̂ (t_i - mean(t_(1..r)))`.
pub fn predict_order_stat_spacings<T: Real>(
    sample: &ObservedSample<T>,
    est: &ParamEstimate<T>,
    m_vals: &ExpectedOrderStats<T>,
    i: usize,
) -> Result<T> {
    check_index(i, sample.n(), sample.r())?;
    check_scale(est)?;
    if m_vals.n != sample.n() {
        return Err(Error::Domain(format!(
            "order statistics are for n = {}, sample has n = {}",
            m_vals.n,
            sample.n()
        )));
    }
    let r = sample.r();
    let rf: T = from_usize(r);
    let x_bar = sample.values().iter().fold(T::zero(), |acc, &x| acc + x) / rf;
    let t_bar = m_vals.values[..r].iter().fold(T::zero(), |acc, &t| acc + t) / rf;
    Ok(x_bar + est.sigma_hat * (m_vals.get(i) - t_bar))
}

/// All predictions `r < i <= n` by the chosen method.
pub fn predict_all<T: Real>(
    sample: &ObservedSample<T>,
    family: &Family<T>,
    m_vals: &ExpectedOrderStats<T>,
    est: &ParamEstimate<T>,
    method: PredictorMethod,
) -> Result<PredictedOrderStats<T>> {
    let (n, r) = (sample.n(), sample.r());
    if r >= n {
        return Err(Error::Domain("the sample is complete; nothing to predict".into()));
    }
    match method {
        PredictorMethod::PredictiveMml => MmlPredictor::new(family, m_vals, r)?.predict(sample, est),
        PredictorMethod::Spacings => {
            let x_r = sample.last();
            let mut values = Vec::with_capacity(n - r);
            let mut clamped = Vec::with_capacity(n - r);
            for i in r + 1..=n {
                let x = predict_order_stat_spacings(sample, est, m_vals, i)?;
                clamped.push(x < x_r);
                values.push(if x < x_r { x_r } else { x });
            }
            Ok(PredictedOrderStats::assemble(
                n,
                r,
                values,
                clamped,
                vec![false; n - r],
                method,
            ))
        }
    }
}

/// Bracket of `t` in the observed values followed by the predictions.
pub fn bracket_censored<T: Real>(
    predicted: &PredictedOrderStats<T>,
    observed: &ObservedSample<T>,
    t: T,
) -> Result<Bracket> {
    bracket(&predicted.combined(observed), t)
}
