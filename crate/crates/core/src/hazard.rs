//! Hazard rate estimators at a time point `t`.
//!
//! HR¹ plugs `δ̂ = (t - μ̂)/σ̂` into the exact standardized hazard. HR² replaces
//! the hazard by its secant through `(m_k, h(m_k))` and `(m_{k+1}, h(m_{k+1}))`,
//! where `x_(k) <= t < x_(k+1)` in the sample, so that HR² is linear in the
//! location-scale estimates and inherits their asymptotic normality.
//!
//! All hazard values are on the standardized scale; [`HazardResult::data_scale`]
//! divides by `σ̂` to give the hazard of the observed variable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{EstimationMethod, ParamEstimate};
use crate::families::{FamilySpec, LocationScaleFamily};
use crate::order_stats::ExpectedOrderStats;
use crate::scalar::Real;
use crate::special::two_sided_critical;

/// Position of `t` among ordered values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bracket {
    /// 1-based `k` with `x_(k) <= t < x_(k+1)`.
    pub k: usize,
    /// `t` fell outside `[x_(1), x_(n))`; the terminal bracket is used.
    pub extrapolated: bool,
}

/// `k = max{i : x_(i) <= t}`, clamped to `1..=n-1`.
pub fn bracket<T: Real>(values: &[T], t: T) -> Result<Bracket> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let below = values.partition_point(|&x| x <= t);
    Ok(match below {
        0 => Bracket {
            k: 1,
            extrapolated: true,
        },
        c if c >= n => Bracket {
            k: n - 1,
            extrapolated: true,
        },
        c => Bracket {
            k: c,
            extrapolated: false,
        },
    })
}

/// Secant of the standardized hazard on `[m_k, m_{k+1}]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HazardLinearization<T> {
    pub k: usize,
    pub m_k: T,
    pub m_k1: T,
    pub h_k: T,
    pub h_k1: T,
    pub alpha_star: T,
    pub beta_star: T,
    /// Carried over from the [`Bracket`].
    pub extrapolated: bool,
}

impl<T: Real> HazardLinearization<T> {
    /// `α* + β*·δ`, evaluated as `h(m_k) + β*(δ - m_k)` so the endpoints are exact.
    pub fn eval(&self, delta: T) -> T {
        self.h_k + self.beta_star * (delta - self.m_k)
    }
}

fn secant<T: Real>(k: usize, m_k: T, m_k1: T, h_k: T, h_k1: T) -> Result<HazardLinearization<T>> {
    if !(m_k < m_k1) {
        return Err(Error::Domain(format!(
            "expected order statistics must increase at k = {k} ({m_k} vs {m_k1})"
        )));
    }
    let beta_star = (h_k1 - h_k) / (m_k1 - m_k);
    Ok(HazardLinearization {
        k,
        m_k,
        m_k1,
        h_k,
        h_k1,
        alpha_star: h_k - beta_star * m_k,
        beta_star,
        extrapolated: false,
    })
}

/// Secant of an arbitrary hazard function through the anchors `k` and `k + 1`.
pub fn linearize_with<T: Real>(
    hazard: impl Fn(T) -> Result<T>,
    m_vals: &[T],
    k: usize,
) -> Result<HazardLinearization<T>> {
    let n = m_vals.len();
    if k < 1 || k >= n {
        return Err(Error::Index {
            index: k,
            reason: format!("bracket index must lie in 1..={}", n.saturating_sub(1)),
        });
    }
    let (m_k, m_k1) = (m_vals[k - 1], m_vals[k]);
    secant(k, m_k, m_k1, hazard(m_k)?, hazard(m_k1)?)
}

/// Secant of the family's exact hazard on bracket `k`.
pub fn linearize_hazard<T: Real, F: LocationScaleFamily<T>>(
    family: &F,
    m_vals: &ExpectedOrderStats<T>,
    k: usize,
) -> Result<HazardLinearization<T>> {
    linearize_with(|z| family.hazard(z), &m_vals.values, k)
}

/// Exact hazard at every expected order statistic, for repeated linearizations.
#[derive(Clone, Debug)]
pub struct HazardTable<T> {
    m: Vec<T>,
    h: Vec<T>,
}

impl<T: Real> HazardTable<T> {
    pub fn new<F: LocationScaleFamily<T>>(family: &F, m_vals: &ExpectedOrderStats<T>) -> Result<Self> {
        let h = m_vals
            .values
            .iter()
            .map(|&m| family.hazard(m))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            m: m_vals.values.clone(),
            h,
        })
    }

    pub fn n(&self) -> usize {
        self.m.len()
    }

    pub fn anchors(&self) -> &[T] {
        &self.m
    }

    pub fn linearize(&self, k: usize) -> Result<HazardLinearization<T>> {
        if k < 1 || k >= self.m.len() {
            return Err(Error::Index {
                index: k,
                reason: format!("bracket index must lie in 1..={}", self.m.len().saturating_sub(1)),
            });
        }
        secant(k, self.m[k - 1], self.m[k], self.h[k - 1], self.h[k])
    }

    pub fn linearize_bracket(&self, b: Bracket) -> Result<HazardLinearization<T>> {
        let mut lin = self.linearize(b.k)?;
        lin.extrapolated = b.extrapolated;
        Ok(lin)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HazardFlags {
    pub extrapolated: bool,
    /// HR¹ was not computable because `1 - F(δ̂)` underflowed.
    pub saturated: bool,
    /// `β* < 0`: the secant lies on a decreasing part of the hazard.
    pub decreasing_branch: bool,
}

impl HazardFlags {
    pub fn any(&self) -> bool {
        self.extrapolated || self.saturated || self.decreasing_branch
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.extrapolated {
            v.push("extrapolated");
        }
        if self.saturated {
            v.push("saturated");
        }
        if self.decreasing_branch {
            v.push("decreasing_branch");
        }
        v
    }
}

/// HR¹, HR² and the HR² confidence interval at one time point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HazardResult<T> {
    pub t: T,
    pub delta_hat: T,
    pub hr1: Option<T>,
    pub hr2: T,
    pub ci_low: T,
    pub ci_high: T,
    pub level: T,
    pub method: EstimationMethod,
    pub flags: HazardFlags,
    pub family: FamilySpec,
    pub k: usize,
    pub alpha_star: T,
    pub beta_star: T,
    /// Divisor under the square root of the interval half-width.
    pub m: T,
    /// `σ̂`, the factor between standardized and data-scale hazards.
    pub sigma_hat: T,
}

/// A hazard result expressed for the observed variable (`h(δ)/σ̂`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataScaleHazard<T> {
    pub hr1: Option<T>,
    pub hr2: T,
    pub ci_low: T,
    pub ci_high: T,
}

impl<T: Real> HazardResult<T> {
    pub fn half_width(&self) -> T {
        (self.ci_high - self.ci_low) / (T::one() + T::one())
    }

    pub fn covers(&self, value: T) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }

    pub fn data_scale(&self) -> DataScaleHazard<T> {
        let s = self.sigma_hat;
        DataScaleHazard {
            hr1: self.hr1.map(|h| h / s),
            hr2: self.hr2 / s,
            ci_low: self.ci_low / s,
            ci_high: self.ci_high / s,
        }
    }
}

/// HR¹, HR² and the level-`level` interval `hr2 ± z·|β*|/√m`.
///
/// `m` is `m_eff` for MML and `n` for least squares.
pub fn estimate_hazard<T: Real, F: LocationScaleFamily<T>>(
    est: &ParamEstimate<T>,
    family: &F,
    lin: &HazardLinearization<T>,
    t: T,
    level: T,
) -> Result<HazardResult<T>> {
    if !(level > T::zero() && level < T::one()) {
        return Err(Error::Domain(format!("level must lie in (0, 1), got {level}")));
    }
    let z = two_sided_critical(level)?;
    estimate_hazard_with_critical(est, family, lin, t, level, z)
}

/// As [`estimate_hazard`] with the normal critical value supplied.
pub fn estimate_hazard_with_critical<T: Real, F: LocationScaleFamily<T>>(
    est: &ParamEstimate<T>,
    family: &F,
    lin: &HazardLinearization<T>,
    t: T,
    level: T,
    critical: T,
) -> Result<HazardResult<T>> {
    if !(est.sigma_hat > T::zero()) {
        return Err(Error::Domain(format!(
            "scale estimate must be positive, got {}",
            est.sigma_hat
        )));
    }
    let delta_hat = (t - est.mu_hat) / est.sigma_hat;
    let hr1 = match family.hazard(delta_hat) {
        Ok(h) => Some(h),
        Err(Error::HazardSaturated { .. }) => None,
        Err(e) => return Err(e),
    };
    let hr2 = lin.eval(delta_hat);
    let m = match est.method {
        EstimationMethod::Mml => est.m_eff,
        EstimationMethod::Ls => T::from_usize(est.n).expect("sample size"),
    };
    let half = critical * lin.beta_star.abs() / m.sqrt();
    Ok(HazardResult {
        t,
        delta_hat,
        hr1,
        hr2,
        ci_low: hr2 - half,
        ci_high: hr2 + half,
        level,
        method: est.method,
        flags: HazardFlags {
            extrapolated: lin.extrapolated,
            saturated: hr1.is_none(),
            decreasing_branch: lin.beta_star < T::zero(),
        },
        family: est.family,
        k: lin.k,
        alpha_star: lin.alpha_star,
        beta_star: lin.beta_star,
        m,
        sigma_hat: est.sigma_hat,
    })
}
