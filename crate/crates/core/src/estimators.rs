//! Least-squares and modified maximum likelihood (MML) estimation of `(μ, σ)`.
//!
//! MML replaces each nonlinear score term `ψ(z) = -f'(z)/f(z)` by a straight
//! line `a_i + b_i z` anchored at the expected order statistic `t_i`, which
//! turns the likelihood equations into a linear equation in `μ` and a
//! quadratic in `σ`. Type-II censored samples add the hazard term
//! `(n - r) h(z_(r))`, linearized the same way at `t_r`.

use std::path::Path;

use num_rational::BigRational;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{Family, FamilyConstants, FamilySpec, LocationScaleFamily};
use crate::order_stats::ExpectedOrderStats;
use crate::quadrature::{integrate_real_line, QuadratureOptions};
use crate::scalar::{from_usize, lit, Real};

/// Ordered observations, possibly Type-II right censored.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedSample<T> {
    values: Vec<T>,
    n: usize,
}

impl<T: Real> ObservedSample<T> {
    /// `values` are the `r` smallest of `n` observations; they are sorted here.
    pub fn new(mut values: Vec<T>, n: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        if values.len() > n {
            return Err(Error::Domain(format!(
                "{} observations exceed the declared sample size n = {n}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite observation {bad}")));
        }
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
        Ok(Self { values, n })
    }

    pub fn complete(values: Vec<T>) -> Result<Self> {
        let n = values.len();
        Self::new(values, n)
    }

    /// Parses one value per line. A leading `#censored n=<N>` line marks the
    /// values as the smallest `r` of `N`; other `#` lines and blanks are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut declared_n = None;
        let mut values = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(arg) = rest.strip_prefix("censored") {
                    if !values.is_empty() || declared_n.is_some() {
                        return Err(Error::Parse(format!(
                            "line {}: censoring directive must precede the data",
                            lineno + 1
                        )));
                    }
                    let n = arg
                        .trim()
                        .strip_prefix("n=")
                        .and_then(|v| v.trim().parse::<usize>().ok())
                        .ok_or_else(|| {
                            Error::Parse(format!(
                                "line {}: expected `#censored n=<N>`, got {line:?}",
                                lineno + 1
                            ))
                        })?;
                    declared_n = Some(n);
                }
                continue;
            }
            let v: f64 = line.parse().map_err(|_| {
                Error::Parse(format!("line {}: not a number: {line:?}", lineno + 1))
            })?;
            values.push(lit(v));
        }
        let n = declared_n.unwrap_or(values.len());
        Self::new(values, n)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.values.len()
    }

    pub fn is_complete(&self) -> bool {
        self.values.len() == self.n
    }

    /// `x_(r)`, the largest observed value.
    pub fn last(&self) -> T {
        self.values[self.values.len() - 1]
    }

    /// The sample `a + b·x` (`b > 0`).
    pub fn affine(&self, a: T, b: T) -> Result<Self> {
        if !(b > T::zero()) {
            return Err(Error::Domain("affine map needs b > 0".into()));
        }
        Self::new(self.values.iter().map(|&x| a + b * x).collect(), self.n)
    }

    fn check_spread(&self) -> Result<()> {
        if self.values[0] == self.last() {
            return Err(Error::DegenerateSample);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimationMethod {
    Mml,
    Ls,
}

impl std::fmt::Display for EstimationMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EstimationMethod::Mml => "MML",
            EstimationMethod::Ls => "LS",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoefficientVariant {
    Primary,
    Alternative,
}

/// Multiplier of the STS quadratic coefficient `C = s·Σβ(y - μ̂)²`.
///
/// `Unit` is what the linearized score equations give; `Lambda` uses `s = λ`.
/// They coincide when `d = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StsScaleVariant {
    #[default]
    Unit,
    Lambda,
}

/// How `m_eff` was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MEffSource {
    /// STS closed form in `h = 2 - d`.
    StsClosedForm,
    /// `(2p/k) Σβ` for LTS, or the total weight of the censored linear system.
    LinearizedInformation,
    /// `n E[ψ'(Z)]` by quadrature.
    FisherInformation,
    /// `n`, for least squares.
    SampleSize,
}

impl MEffSource {
    pub fn formula(&self) -> &'static str {
        match self {
            MEffSource::StsClosedForm => {
                "n{1 - (2/h)[(1 - 1/(2h))/(1 + 1/h + 3/(4h^2))]}, h = 2 - d"
            }
            MEffSource::LinearizedInformation => "sum of linearized score slopes b_i (+ (n-r) h'(t_r))",
            MEffSource::FisherInformation => "n E[psi'(Z)]",
            MEffSource::SampleSize => "n",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MmlOptions {
    pub sts_scale: StsScaleVariant,
}

/// Linearization coefficients of the score at the anchors `t_i`.
///
/// For STS, `ψ(z) ≈ -λα_i + β_i z`; for LTS, `ψ(z) ≈ (2p/k)(α_i + β_i z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MmlCoefficients<T> {
    pub alpha: Vec<T>,
    pub beta: Vec<T>,
    pub variant: CoefficientVariant,
    /// Indices whose coefficients came from the alternative formulas.
    pub replaced: Vec<bool>,
    pub anchors: Vec<T>,
    spec: FamilySpec,
    /// `-λ` (STS) or `2p/k` (LTS): `a_i = intercept_scale·α_i`.
    intercept_scale: T,
    /// `1` (STS) or `2p/k` (LTS): `b_i = slope_scale·β_i`.
    slope_scale: T,
}

impl<T: Real> MmlCoefficients<T> {
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn spec(&self) -> FamilySpec {
        self.spec
    }

    /// Intercept `a_i` of the score line at index `i` (0-based).
    pub fn score_intercept(&self, i: usize) -> T {
        self.intercept_scale * self.alpha[i]
    }

    /// Slope `b_i` of the score line at index `i` (0-based).
    pub fn score_slope(&self, i: usize) -> T {
        self.slope_scale * self.beta[i]
    }

    pub fn beta_sum(&self) -> T {
        self.beta.iter().fold(T::zero(), |acc, &b| acc + b)
    }
}

fn lts_params<T: Real>(family: &Family<T>) -> (T, T) {
    match (family.spec(), family.constants()) {
        (FamilySpec::Lts { p }, FamilyConstants::Lts { k, .. }) => (lit(p), *k),
        _ => unreachable!("LTS family"),
    }
}

fn sts_params<T: Real>(family: &Family<T>) -> (T, T) {
    match family.spec() {
        FamilySpec::Sts { r, .. } => {
            let lambda = family.lambda().expect("STS lambda");
            (lambda, lambda / lit(2.0 * f64::from(r)))
        }
        FamilySpec::Lts { .. } => unreachable!("STS family"),
    }
}

/// Coefficients at arbitrary anchors; `force_alternative` replaces every index.
pub fn coefficients_at<T: Real>(
    family: &Family<T>,
    anchors: &[T],
    force_alternative: bool,
) -> MmlCoefficients<T> {
    let spec = family.spec();
    let len = anchors.len();
    let mut alpha = Vec::with_capacity(len);
    let mut beta = Vec::with_capacity(len);
    let mut replaced = vec![false; len];
    let (intercept_scale, slope_scale);
    match spec {
        FamilySpec::Sts { r, .. } => {
            let (lambda, a) = sts_params(family);
            let rr: T = lit(f64::from(r));
            let alternative = force_alternative || lambda > T::one();
            for &t in anchors {
                let u = a * t * t;
                let d2 = (T::one() + u) * (T::one() + u);
                let cubic = lambda / rr * t * t * t;
                if alternative {
                    alpha.push((cubic + (T::one() - lambda.recip()) * t) / d2);
                    beta.push(T::one() - lambda * (lambda.recip() - u) / d2);
                } else {
                    alpha.push(cubic / d2);
                    beta.push(T::one() - lambda * (T::one() - u) / d2);
                }
            }
            if alternative {
                replaced.iter_mut().for_each(|x| *x = true);
            }
            intercept_scale = -lambda;
            slope_scale = T::one();
        }
        FamilySpec::Lts { .. } => {
            let (p, k) = lts_params(family);
            let two: T = lit(2.0);
            for (i, &t) in anchors.iter().enumerate() {
                let u = t * t / k;
                let d1 = T::one() + u;
                let b = (T::one() - u) / (d1 * d1);
                if force_alternative || b < T::zero() {
                    alpha.push(T::zero());
                    beta.push(d1.recip());
                    replaced[i] = true;
                } else {
                    alpha.push(two / k * t * t * t / (d1 * d1));
                    beta.push(b);
                }
            }
            intercept_scale = two * p / k;
            slope_scale = intercept_scale;
        }
    }
    let variant = if replaced.iter().any(|&x| x) {
        CoefficientVariant::Alternative
    } else {
        CoefficientVariant::Primary
    };
    MmlCoefficients {
        alpha,
        beta,
        variant,
        replaced,
        anchors: anchors.to_vec(),
        spec,
        intercept_scale,
        slope_scale,
    }
}

/// Coefficients at the expected order statistics of `m_vals`.
///
/// STS switches to the alternative set whenever `λ > 1`; LTS replaces each
/// index whose primary `β` would be negative.
pub fn mml_coefficients<T: Real>(
    family: &Family<T>,
    m_vals: &ExpectedOrderStats<T>,
) -> Result<MmlCoefficients<T>> {
    if m_vals.spec != family.spec() {
        return Err(Error::Domain(format!(
            "order statistics were computed for {}, not {}",
            m_vals.spec,
            family.spec()
        )));
    }
    Ok(coefficients_at(family, &m_vals.values, false))
}

/// Location and scale estimates with their information constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate<T> {
    pub mu_hat: T,
    pub sigma_hat: T,
    pub method: EstimationMethod,
    /// Divisor in `V(μ̂) ≈ σ²/m`.
    pub m_eff: T,
    pub m_eff_source: MEffSource,
    pub family: FamilySpec,
    pub n: usize,
    pub r: usize,
    /// Coefficient set actually used (MML only).
    pub variant: Option<CoefficientVariant>,
}

/// Sample mean and standard deviation rescaled by `√μ₂`.
pub fn ls_estimate<T: Real>(
    sample: &ObservedSample<T>,
    family: &Family<T>,
) -> Result<ParamEstimate<T>> {
    if !sample.is_complete() {
        return Err(Error::Domain(
            "least squares needs a complete sample".into(),
        ));
    }
    let n = sample.n();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    sample.check_spread()?;
    let nf: T = from_usize(n);
    let xs = sample.values();
    let mean = xs.iter().fold(T::zero(), |acc, &x| acc + x) / nf;
    let ss = xs
        .iter()
        .fold(T::zero(), |acc, &x| acc + (x - mean) * (x - mean));
    let s = (ss / ((nf - T::one()) * family.variance())).sqrt();
    if !(s > T::zero()) {
        return Err(Error::DegenerateSample);
    }
    Ok(ParamEstimate {
        mu_hat: mean,
        sigma_hat: s,
        method: EstimationMethod::Ls,
        m_eff: nf,
        m_eff_source: MEffSource::SampleSize,
        family: family.spec(),
        n,
        r: n,
        variant: None,
    })
}

/// Positive root of `den²·σ² - lin·σ - quad = 0` scaled as `(lin + √(lin² + 4·cnt·quad)) / (2√(cnt(cnt-1)))`.
fn positive_root<T: Real>(lin: T, quad: T, cnt: T) -> Result<T> {
    if !(quad >= T::zero()) {
        return Err(Error::EstimationFailure(format!(
            "negative quadratic coefficient {quad}"
        )));
    }
    let four: T = lit(4.0);
    let disc = lin * lin + four * cnt * quad;
    if !(disc > T::zero()) || !disc.is_finite() {
        return Err(Error::EstimationFailure(format!(
            "nonpositive discriminant {disc}"
        )));
    }
    let root = disc.sqrt();
    let den = lit::<T>(2.0) * (cnt * (cnt - T::one())).sqrt();
    // rationalized form avoids cancellation when lin < 0
    let sigma = if lin >= T::zero() {
        (lin + root) / den
    } else {
        four * cnt * quad / ((root - lin) * den)
    };
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return Err(Error::EstimationFailure(format!("invalid scale root {sigma}")));
    }
    Ok(sigma)
}

fn solve_complete<T: Real>(
    ys: &[T],
    coeffs: &MmlCoefficients<T>,
    opts: &MmlOptions,
) -> Result<(T, T)> {
    let n = ys.len();
    let m = coeffs.beta_sum();
    if !(m > T::zero()) {
        return Err(Error::EstimationFailure(format!(
            "nonpositive coefficient sum {m}"
        )));
    }
    let mu = ys
        .iter()
        .zip(&coeffs.beta)
        .fold(T::zero(), |acc, (&y, &b)| acc + b * y)
        / m;
    let (mut sa, mut sb) = (T::zero(), T::zero());
    for i in 0..n {
        let dev = ys[i] - mu;
        sa = sa + coeffs.alpha[i] * dev;
        sb = sb + coeffs.beta[i] * dev * dev;
    }
    // σ-equation: n σ² - (Σ a_i (y_i - μ̂)) σ - Σ b_i (y_i - μ̂)² = 0
    let (lin, quad) = match coeffs.spec {
        FamilySpec::Sts { .. } => {
            let lambda = -coeffs.intercept_scale;
            let scale = match opts.sts_scale {
                StsScaleVariant::Unit => T::one(),
                StsScaleVariant::Lambda => lambda,
            };
            (-(lambda * sa), scale * sb)
        }
        FamilySpec::Lts { .. } => (coeffs.intercept_scale * sa, coeffs.slope_scale * sb),
    };
    let sigma = positive_root(lin, quad, from_usize(n))?;
    Ok((mu, sigma))
}

/// Closed-form STS information constant; requires `d < 2`.
pub fn sts_effective_m<T: Real>(d: f64, n: usize) -> Result<T> {
    if !(d < 2.0) {
        return Err(Error::Domain(format!(
            "the STS closed form for m needs d < 2, got {d}"
        )));
    }
    let h: T = lit(2.0 - d);
    let one = T::one();
    let two: T = lit(2.0);
    let inner = (one - one / (two * h)) / (one + one / h + lit::<T>(3.0) / (lit::<T>(4.0) * h * h));
    Ok(from_usize::<T>(n) * (one - two / h * inner))
}

/// The STS closed form evaluated over the rationals.
pub fn sts_effective_m_exact(d: &BigRational, n: usize) -> Result<BigRational> {
    let two = BigRational::from_integer(2.into());
    if *d >= two {
        return Err(Error::Domain(format!(
            "the STS closed form for m needs d < 2, got {d}"
        )));
    }
    let one = BigRational::one();
    let h = &two - d;
    let inner = (&one - (&one / (&two * &h)))
        / (&one + (&one / &h) + BigRational::new(3.into(), 4.into()) / (&h * &h));
    Ok(BigRational::from_integer(n.into()) * (&one - (&two / &h) * inner))
}

/// `n E[ψ'(Z)]`, the Fisher information for location times `n`.
pub fn fisher_effective_m<T: Real>(family: &Family<T>, n: usize) -> Result<T> {
    let info = integrate_real_line(
        |z| family.score_derivative(z) * family.pdf(z),
        T::zero(),
        QuadratureOptions::default(),
    )?;
    Ok(from_usize::<T>(n) * info.value)
}

/// The information constant `m` for a complete sample of size `n`.
///
/// STS uses the closed form in `h = 2 - d` (domain error for `d >= 2`);
/// LTS uses `(2p/k) Σβ`.
pub fn effective_m<T: Real>(
    family: &Family<T>,
    n: usize,
    coeffs: &MmlCoefficients<T>,
) -> Result<(T, MEffSource)> {
    match family.spec() {
        FamilySpec::Sts { d, .. } => Ok((sts_effective_m(d, n)?, MEffSource::StsClosedForm)),
        FamilySpec::Lts { .. } => Ok((
            coeffs.slope_scale * coeffs.beta_sum(),
            MEffSource::LinearizedInformation,
        )),
    }
}

/// MML estimate for a complete sample.
///
/// Retries with the alternative coefficient set if the primary set yields no
/// admissible root.
pub fn mml_estimate_complete<T: Real>(
    sample: &ObservedSample<T>,
    family: &Family<T>,
    coeffs: &MmlCoefficients<T>,
    opts: &MmlOptions,
) -> Result<ParamEstimate<T>> {
    let plan = CompleteMml::from_coefficients(family, coeffs.clone(), *opts)?;
    plan.fit(sample)
}

/// Precomputed complete-sample MML for one `(family, n)`.
#[derive(Clone, Debug)]
pub struct CompleteMml<T> {
    primary: MmlCoefficients<T>,
    alternative: Option<MmlCoefficients<T>>,
    m_primary: (T, MEffSource),
    m_alternative: Option<(T, MEffSource)>,
    opts: MmlOptions,
}

fn m_eff_or_fisher<T: Real>(
    family: &Family<T>,
    n: usize,
    coeffs: &MmlCoefficients<T>,
) -> Result<(T, MEffSource)> {
    match effective_m(family, n, coeffs) {
        Err(Error::Domain(_)) => Ok((fisher_effective_m(family, n)?, MEffSource::FisherInformation)),
        other => other,
    }
}

impl<T: Real> CompleteMml<T> {
    pub fn new(family: &Family<T>, m_vals: &ExpectedOrderStats<T>, opts: MmlOptions) -> Result<Self> {
        Self::from_coefficients(family, mml_coefficients(family, m_vals)?, opts)
    }

    pub fn from_coefficients(
        family: &Family<T>,
        coeffs: MmlCoefficients<T>,
        opts: MmlOptions,
    ) -> Result<Self> {
        if coeffs.spec != family.spec() {
            return Err(Error::Domain("coefficients belong to another family".into()));
        }
        let n = coeffs.len();
        let m_primary = m_eff_or_fisher(family, n, &coeffs)?;
        let alternative = if coeffs.replaced.iter().all(|&x| x) {
            None
        } else {
            Some(coefficients_at(family, &coeffs.anchors, true))
        };
        let m_alternative = alternative
            .as_ref()
            .map(|c| m_eff_or_fisher(family, n, c))
            .transpose()?;
        Ok(Self {
            primary: coeffs,
            alternative,
            m_primary,
            m_alternative,
            opts,
        })
    }

    pub fn coefficients(&self) -> &MmlCoefficients<T> {
        &self.primary
    }

    pub fn n(&self) -> usize {
        self.primary.len()
    }

    pub fn fit(&self, sample: &ObservedSample<T>) -> Result<ParamEstimate<T>> {
        self.fit_values(sample.values(), sample.is_complete())
    }

    /// Fits sorted complete-sample values without building an [`ObservedSample`].
    pub fn fit_values(&self, ys: &[T], complete: bool) -> Result<ParamEstimate<T>> {
        let n = self.n();
        if !complete {
            return Err(Error::Domain("expected a complete sample".into()));
        }
        if ys.len() != n {
            return Err(Error::Domain(format!(
                "coefficients are for n = {n}, sample has {}",
                ys.len()
            )));
        }
        if n < 2 {
            return Err(Error::InsufficientData { needed: 2, got: n });
        }
        if ys[0] == ys[n - 1] {
            return Err(Error::DegenerateSample);
        }
        let (coeffs, (m_eff, source), (mu, sigma)) =
            match solve_complete(ys, &self.primary, &self.opts) {
                Ok(fit) => (&self.primary, self.m_primary, fit),
                Err(Error::EstimationFailure(why)) => match &self.alternative {
                    Some(alt) => {
                        let fit = solve_complete(ys, alt, &self.opts).map_err(|e| {
                            Error::EstimationFailure(format!("{why}; alternative coefficients: {e}"))
                        })?;
                        (alt, self.m_alternative.expect("paired with alternative"), fit)
                    }
                    None => return Err(Error::EstimationFailure(why)),
                },
                Err(e) => return Err(e),
            };
        Ok(ParamEstimate {
            mu_hat: mu,
            sigma_hat: sigma,
            method: EstimationMethod::Mml,
            m_eff,
            m_eff_source: source,
            family: coeffs.spec,
            n,
            r: n,
            variant: Some(coeffs.variant),
        })
    }
}

/// Linear system of the censored MML equations for one coefficient set.
#[derive(Clone, Debug)]
struct CensoredSystem<T> {
    weights: Vec<T>,
    intercepts: Vec<T>,
    total_weight: T,
    total_intercept: T,
    variant: CoefficientVariant,
}

impl<T: Real> CensoredSystem<T> {
    fn build(coeffs: &MmlCoefficients<T>, n: usize, tangent: (T, T)) -> Self {
        let r = coeffs.len();
        let mut weights: Vec<T> = (0..r).map(|i| coeffs.score_slope(i)).collect();
        let mut intercepts: Vec<T> = (0..r).map(|i| coeffs.score_intercept(i)).collect();
        let censored: T = from_usize(n - r);
        let (c, e) = tangent;
        weights[r - 1] = weights[r - 1] + censored * e;
        intercepts[r - 1] = intercepts[r - 1] + censored * c;
        let total_weight = weights.iter().fold(T::zero(), |acc, &w| acc + w);
        let total_intercept = intercepts.iter().fold(T::zero(), |acc, &a| acc + a);
        Self {
            weights,
            intercepts,
            total_weight,
            total_intercept,
            variant: coeffs.variant,
        }
    }

    fn solve(&self, ys: &[T], quad_scale: T) -> Result<(T, T)> {
        let w = self.total_weight;
        if !(w > T::zero()) {
            return Err(Error::EstimationFailure(format!(
                "nonpositive total weight {w}"
            )));
        }
        let center = ys
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&y, &wi)| acc + wi * y)
            / w;
        let (mut lin, mut quad) = (T::zero(), T::zero());
        for (i, &y) in ys.iter().enumerate() {
            let dev = y - center;
            lin = lin + self.intercepts[i] * dev;
            quad = quad + self.weights[i] * dev * dev;
        }
        let sigma = positive_root(lin, quad_scale * quad, from_usize(ys.len()))?;
        Ok((center + self.total_intercept / w * sigma, sigma))
    }
}

/// Precomputed MML for Type-II censored samples with fixed `(family, n, r)`.
///
/// With `r = n` it delegates to [`CompleteMml`], so both paths agree exactly.
#[derive(Clone, Debug)]
pub struct CensoredMml<T> {
    spec: FamilySpec,
    n: usize,
    r: usize,
    quad_scale: T,
    coefficients: MmlCoefficients<T>,
    primary: Option<CensoredSystem<T>>,
    alternative: Option<CensoredSystem<T>>,
    complete: Option<CompleteMml<T>>,
}

impl<T: Real> CensoredMml<T> {
    pub fn new(
        family: &Family<T>,
        m_vals: &ExpectedOrderStats<T>,
        r: usize,
        opts: MmlOptions,
    ) -> Result<Self> {
        let n = m_vals.n;
        if m_vals.spec != family.spec() {
            return Err(Error::Domain("order statistics belong to another family".into()));
        }
        if r < 2 {
            return Err(Error::InsufficientData { needed: 2, got: r });
        }
        if r > n {
            return Err(Error::Domain(format!("r = {r} exceeds n = {n}")));
        }
        let quad_scale = match (family.spec(), opts.sts_scale) {
            (FamilySpec::Sts { .. }, StsScaleVariant::Lambda) => family.lambda().expect("STS"),
            _ => T::one(),
        };
        if r == n {
            let complete = CompleteMml::new(family, m_vals, opts)?;
            return Ok(Self {
                spec: family.spec(),
                n,
                r,
                quad_scale,
                coefficients: complete.coefficients().clone(),
                primary: None,
                alternative: None,
                complete: Some(complete),
            });
        }
        let anchors = &m_vals.values[..r];
        let coefficients = coefficients_at(family, anchors, false);
        let t_r = anchors[r - 1];
        let slope = family.hazard_derivative(t_r)?;
        let tangent = (family.hazard(t_r)? - t_r * slope, slope);
        let primary = CensoredSystem::build(&coefficients, n, tangent);
        let alternative = if coefficients.replaced.iter().all(|&x| x) {
            None
        } else {
            Some(CensoredSystem::build(
                &coefficients_at(family, anchors, true),
                n,
                tangent,
            ))
        };
        Ok(Self {
            spec: family.spec(),
            n,
            r,
            quad_scale,
            coefficients,
            primary: Some(primary),
            alternative,
            complete: None,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn coefficients(&self) -> &MmlCoefficients<T> {
        &self.coefficients
    }

    pub fn fit(&self, sample: &ObservedSample<T>) -> Result<ParamEstimate<T>> {
        if sample.n() != self.n || sample.r() != self.r {
            return Err(Error::Domain(format!(
                "plan is for n = {}, r = {}; sample has n = {}, r = {}",
                self.n,
                self.r,
                sample.n(),
                sample.r()
            )));
        }
        if let Some(complete) = &self.complete {
            return complete.fit(sample);
        }
        sample.check_spread()?;
        let ys = sample.values();
        let primary = self.primary.as_ref().expect("censored system");
        let (system, (mu, sigma)) = match primary.solve(ys, self.quad_scale) {
            Ok(fit) => (primary, fit),
            Err(Error::EstimationFailure(why)) => match &self.alternative {
                Some(alt) => (
                    alt,
                    alt.solve(ys, self.quad_scale).map_err(|e| {
                        Error::EstimationFailure(format!("{why}; alternative coefficients: {e}"))
                    })?,
                ),
                None => return Err(Error::EstimationFailure(why)),
            },
            Err(e) => return Err(e),
        };
        Ok(ParamEstimate {
            mu_hat: mu,
            sigma_hat: sigma,
            method: EstimationMethod::Mml,
            m_eff: system.total_weight,
            m_eff_source: MEffSource::LinearizedInformation,
            family: self.spec,
            n: self.n,
            r: self.r,
            variant: Some(system.variant),
        })
    }
}

/// MML estimate for a Type-II censored sample (`2 <= r <= n`).
pub fn mml_estimate_censored<T: Real>(
    sample: &ObservedSample<T>,
    family: &Family<T>,
    m_vals: &ExpectedOrderStats<T>,
    opts: &MmlOptions,
) -> Result<ParamEstimate<T>> {
    if m_vals.n != sample.n() {
        return Err(Error::Domain(format!(
            "order statistics are for n = {}, sample has n = {}",
            m_vals.n,
            sample.n()
        )));
    }
    CensoredMml::new(family, m_vals, sample.r(), *opts)?.fit(sample)
}

/// MML for any sample: complete or censored.
pub fn mml_estimate<T: Real>(
    sample: &ObservedSample<T>,
    family: &Family<T>,
    m_vals: &ExpectedOrderStats<T>,
    opts: &MmlOptions,
) -> Result<ParamEstimate<T>> {
    if sample.is_complete() {
        if m_vals.n != sample.n() {
            return Err(Error::Domain(format!(
                "order statistics are for n = {}, sample has n = {}",
                m_vals.n,
                sample.n()
            )));
        }
        mml_estimate_complete(sample, family, &mml_coefficients(family, m_vals)?, opts)
    } else {
        mml_estimate_censored(sample, family, m_vals, opts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::order_stats::{expected_order_stats, OrderStatMethod, OrderStatOptions};

    fn eos(family: &Family<f64>, n: usize) -> ExpectedOrderStats<f64> {
        expected_order_stats(family, n, OrderStatMethod::Quadrature, &OrderStatOptions::default())
            .unwrap()
    }

    #[test]
    fn coefficients_at_zero() {
        let sts: Family<f64> = Family::new(FamilySpec::sts(3, 1.0)).unwrap();
        let c = coefficients_at(&sts, &[0.0], false);
        // λ = 1.5 > 1 selects the alternative set, whose β at 0 is 0
        assert_eq!(c.variant, CoefficientVariant::Alternative);
        assert_eq!((c.alpha[0], c.beta[0]), (0.0, 0.0));
        let sts: Family<f64> = Family::new(FamilySpec::sts(3, -1.0)).unwrap();
        let c = coefficients_at(&sts, &[0.0], false);
        assert_eq!(c.variant, CoefficientVariant::Primary);
        assert_eq!(c.alpha[0], 0.0);
        assert!((c.beta[0] - (1.0 - 0.75)).abs() < 1e-15);
        let lts: Family<f64> = Family::new(FamilySpec::lts(3.0)).unwrap();
        let c = coefficients_at(&lts, &[0.0], false);
        assert_eq!((c.alpha[0], c.beta[0]), (0.0, 1.0));
    }

    #[test]
    fn lts_negative_beta_is_replaced_per_index() {
        let lts: Family<f64> = Family::new(FamilySpec::lts(3.0)).unwrap();
        let c = coefficients_at(&lts, &[-0.5, 2.0], false);
        assert_eq!(c.replaced, vec![false, true]);
        assert_eq!(c.variant, CoefficientVariant::Alternative);
        assert!((c.beta[1] - 3.0 / 7.0).abs() < 1e-15);
        assert_eq!(c.alpha[1], 0.0);
        let primary_beta: f64 = (1.0 - 4.0 / 3.0) / (1.0f64 + 4.0 / 3.0).powi(2);
        assert!((primary_beta + 3.0 / 49.0).abs() < 1e-15);
    }

    #[test]
    fn score_lines_pass_through_the_score() {
        for spec in [FamilySpec::sts(2, 0.0), FamilySpec::sts(2, 1.0), FamilySpec::lts(3.0)] {
            let f: Family<f64> = Family::new(spec).unwrap();
            let anchors = [-2.2, -0.4, 0.9, 1.7];
            for force in [false, true] {
                let c = coefficients_at(&f, &anchors, force);
                for (i, &t) in anchors.iter().enumerate() {
                    let line = c.score_intercept(i) + c.score_slope(i) * t;
                    assert!((line - f.score(t)).abs() < 1e-12, "{spec} t = {t}");
                }
            }
        }
    }

    #[test]
    fn effective_m_closed_form() {
        let m: f64 = sts_effective_m(0.0, 20).unwrap();
        assert!((m - 100.0 / 9.0).abs() < 1e-12);
        let m: f64 = sts_effective_m(1.0, 20).unwrap();
        assert!((m - 20.0 * (1.0 - 2.0 * (0.5 / 2.75))).abs() < 1e-12);
        assert!(sts_effective_m::<f64>(2.0, 20).is_err());
        let exact = sts_effective_m_exact(&BigRational::from_integer(0.into()), 20).unwrap();
        assert_eq!(exact, BigRational::new(100.into(), 9.into()));
    }

    #[test]
    fn effective_m_lts_at_zero_anchors() {
        let f: Family<f64> = Family::new(FamilySpec::lts(3.0)).unwrap();
        let c = coefficients_at(&f, &[0.0; 10], false);
        let (m, _) = effective_m(&f, 10, &c).unwrap();
        assert!((m - 2.0 * 3.0 * 10.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_m_is_fisher_information_for_r2() {
        for d in [-1.0, 0.0, 1.0] {
            let f: Family<f64> = Family::new(FamilySpec::sts(2, d)).unwrap();
            let fisher = fisher_effective_m(&f, 20).unwrap();
            let closed: f64 = sts_effective_m(d, 20).unwrap();
            assert!((fisher - closed).abs() < 1e-8, "d = {d}");
        }
    }

    #[test]
    fn sample_parsing() {
        let s: ObservedSample<f64> = ObservedSample::parse("#censored n=5\n3\n1\n\n2\n").unwrap();
        assert_eq!((s.n(), s.r()), (5, 3));
        assert_eq!(s.values(), &[1.0, 2.0, 3.0]);
        let s: ObservedSample<f64> = ObservedSample::parse("# comment\n1.5\n-2\n").unwrap();
        assert!(s.is_complete());
        assert!(ObservedSample::<f64>::parse("1\nabc\n").is_err());
        assert!(ObservedSample::<f64>::parse("#censored n=2\n1\n2\n3\n").is_err());
        assert!(ObservedSample::<f64>::parse("#censored m=2\n1\n").is_err());
    }

    #[test]
    fn ls_reference_and_errors() {
        let f: Family<f64> = Family::new(FamilySpec::lts(3.0)).unwrap();
        let s = ObservedSample::complete(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let e = ls_estimate(&s, &f).unwrap();
        assert_eq!(e.mu_hat, 2.5);
        assert!((e.sigma_hat - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(e.m_eff, 4.0);
        let one = ObservedSample::complete(vec![1.0]).unwrap();
        assert!(matches!(ls_estimate(&one, &f), Err(Error::InsufficientData { .. })));
        let flat = ObservedSample::complete(vec![2.0; 5]).unwrap();
        assert!(matches!(ls_estimate(&flat, &f), Err(Error::DegenerateSample)));
    }

    #[test]
    fn censored_plan_reduces_to_complete() {
        let f: Family<f64> = Family::new(FamilySpec::sts(2, 0.0)).unwrap();
        let m = eos(&f, 8);
        let s = ObservedSample::complete(vec![-1.3, -0.8, -0.1, 0.2, 0.4, 0.9, 1.1, 2.5]).unwrap();
        let opts = MmlOptions::default();
        let a = mml_estimate_censored(&s, &f, &m, &opts).unwrap();
        let b = mml_estimate_complete(&s, &f, &mml_coefficients(&f, &m).unwrap(), &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_and_short_samples() {
        let f: Family<f64> = Family::new(FamilySpec::sts(2, 0.0)).unwrap();
        let m = eos(&f, 6);
        let flat = ObservedSample::new(vec![1.0; 4], 6).unwrap();
        assert!(matches!(
            mml_estimate_censored(&flat, &f, &m, &MmlOptions::default()),
            Err(Error::DegenerateSample)
        ));
        let short = ObservedSample::new(vec![1.0], 6).unwrap();
        assert!(matches!(
            mml_estimate_censored(&short, &f, &m, &MmlOptions::default()),
            Err(Error::InsufficientData { .. })
        ));
    }
}
