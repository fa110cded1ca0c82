//! Standardized short-tailed (STS) and long-tailed (LTS) symmetric families.
//!
//! STS(r, d) has density `C (1 + (λ/2r) z²)^r φ(z)` with `λ = r/(r-d)`; its
//! variance is `μ₂`. LTS(p) has density proportional to `(1 + z²/k)^(-p)`
//! with `k = 2p - 3`, i.e. a Student-t with `2p - 1` degrees of freedom
//! rescaled to unit variance.

use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots::newton_bisect;
use crate::scalar::{lit, to_f64, tolerance, Real};
use crate::special::{beta_inc, ln_gamma, norm_cdf, norm_pdf, norm_quantile};

/// Survival probabilities below this are treated as hazard saturation.
pub const SURVIVAL_FLOOR: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FamilySpec {
    Sts { r: u32, d: f64 },
    Lts { p: f64 },
}

impl FamilySpec {
    pub fn sts(r: u32, d: f64) -> Self {
        FamilySpec::Sts { r, d }
    }

    pub fn lts(p: f64) -> Self {
        FamilySpec::Lts { p }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            FamilySpec::Sts { r, d } => {
                if r == 0 {
                    return Err(Error::ParameterDomain("STS requires r >= 1".into()));
                }
                if !d.is_finite() || d >= f64::from(r) {
                    return Err(Error::ParameterDomain(format!(
                        "STS requires finite d < r (r = {r}, d = {d})"
                    )));
                }
            }
            FamilySpec::Lts { p } => {
                if !p.is_finite() || p < 2.0 {
                    return Err(Error::ParameterDomain(format!(
                        "LTS requires p >= 2, got {p}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `λ = r/(r-d)` for STS.
    pub fn lambda(&self) -> Option<f64> {
        match *self {
            FamilySpec::Sts { r, d } => Some(f64::from(r) / (f64::from(r) - d)),
            FamilySpec::Lts { .. } => None,
        }
    }

    /// Stable identifier used in cache file names, e.g. `sts_r2_d0` or `lts_p3`.
    pub fn label(&self) -> String {
        match *self {
            FamilySpec::Sts { r, d } => format!("sts_r{r}_d{d}"),
            FamilySpec::Lts { p } => format!("lts_p{p}"),
        }
    }

    pub fn is_sts(&self) -> bool {
        matches!(self, FamilySpec::Sts { .. })
    }
}

impl fmt::Display for FamilySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            FamilySpec::Sts { r, d } => write!(f, "STS(r={r}, d={d})"),
            FamilySpec::Lts { p } => write!(f, "LTS(p={p})"),
        }
    }
}

/// Derived constants of a family.
#[derive(Clone, Debug, PartialEq)]
pub enum FamilyConstants<T> {
    Sts {
        lambda: T,
        /// Normalizer `C`.
        norm_const: T,
        /// Variance of the standardized variable.
        mu2: T,
    },
    Lts {
        k: T,
        /// Degrees of freedom `2p - 1` of the underlying Student-t.
        dof: T,
        /// Density normalizer `Γ(p) / (√(kπ) Γ(p - 1/2))`.
        norm: T,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocScale<T> {
    pub mu: T,
    pub sigma: T,
}

impl<T: Real> LocScale<T> {
    pub fn new(mu: T, sigma: T) -> Result<Self> {
        if !(sigma > T::zero()) || !sigma.is_finite() || !mu.is_finite() {
            return Err(Error::ParameterDomain(format!(
                "location-scale requires finite mu and sigma > 0 (mu = {mu}, sigma = {sigma})"
            )));
        }
        Ok(Self { mu, sigma })
    }

    pub fn standard() -> Self {
        Self {
            mu: T::zero(),
            sigma: T::one(),
        }
    }

    pub fn standardize(&self, x: T) -> T {
        (x - self.mu) / self.sigma
    }
}

/// A standardized location-scale family.
///
/// `score` is `-f'(z)/f(z)`, the nonlinear term that MML linearizes.
pub trait LocationScaleFamily<T: Real>: Sync {
    fn pdf(&self, z: T) -> T;
    fn cdf(&self, z: T) -> T;
    /// `1 - F(z)`, accurate in the upper tail.
    fn sf(&self, z: T) -> T;
    fn score(&self, z: T) -> T;
    fn score_derivative(&self, z: T) -> T;
    /// Variance of the standardized variable.
    fn variance(&self) -> T;

    fn hazard(&self, z: T) -> Result<T> {
        let s = self.sf(z);
        let floor = lit::<T>(SURVIVAL_FLOOR).max(T::min_positive_value());
        if !(s >= floor) {
            return Err(Error::HazardSaturated {
                z: to_f64(z),
                floor: to_f64(floor),
            });
        }
        Ok(self.pdf(z) / s)
    }

    /// `h'(z) = h(z) (h(z) - score(z))`.
    fn hazard_derivative(&self, z: T) -> Result<T> {
        let h = self.hazard(z)?;
        Ok(h * (h - self.score(z)))
    }

    /// Quantile by bracketed Newton iteration (symmetric families reflect `q > 1/2`).
    fn quantile(&self, q: T) -> Result<T> {
        if !(q > T::zero() && q < T::one()) {
            return Err(Error::Domain(format!("quantile requires 0 < q < 1, got {q}")));
        }
        let half: T = lit(0.5);
        if q == half {
            return Ok(T::zero());
        }
        if q > half {
            return Ok(-self.quantile(T::one() - q)?);
        }
        let scale = self.variance().sqrt();
        let guess = norm_quantile(q)? * scale;
        let mut lo = guess * lit(2.0) - scale;
        let mut steps = 0;
        while self.cdf(lo) > q {
            lo = lo * lit(2.0);
            steps += 1;
            if steps > 200 || !lo.is_finite() {
                return Err(Error::RootFinding(format!("cannot bracket quantile {q}")));
            }
        }
        newton_bisect(
            |z| (self.cdf(z) - q, self.pdf(z)),
            lo,
            T::zero(),
            tolerance(1e-13),
        )
    }
}

/// A validated family with precomputed constants.
#[derive(Clone, Debug)]
pub struct Family<T> {
    spec: FamilySpec,
    consts: FamilyConstants<T>,
    kind: Kernel<T>,
    sampler: Sampler,
}

#[derive(Clone, Debug)]
enum Kernel<T> {
    Sts {
        r: u32,
        lambda: T,
        /// `λ / 2r`
        a: T,
        /// `binom(r, j) a^j`, ascending `j`.
        terms: Vec<T>,
        norm_const: T,
        mu2: T,
    },
    Lts {
        p: T,
        k: T,
        dof: T,
        norm: T,
    },
}

#[derive(Clone, Debug)]
enum Sampler {
    Mixture {
        cumulative: Vec<f64>,
        shapes: Vec<Gamma<f64>>,
    },
    StudentT {
        dist: StudentT<f64>,
        scale: f64,
    },
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// `(2j - 1)!!` with `(-1)!! = 1`.
fn odd_double_factorial(j: u32) -> f64 {
    (1..=j).fold(1.0, |acc, i| acc * f64::from(2 * i - 1))
}

impl<T: Real> Family<T> {
    pub fn new(spec: FamilySpec) -> Result<Self> {
        spec.validate()?;
        match spec {
            FamilySpec::Sts { r, d } => {
                let rf = f64::from(r);
                let lambda_f = rf / (rf - d);
                let a_f = lambda_f / (2.0 * rf);
                let lambda: T = lit(lambda_f);
                let a: T = lit(a_f);
                let mut terms = Vec::with_capacity(r as usize + 1);
                let mut s0 = T::zero();
                let mut s1 = T::zero();
                for j in 0..=r {
                    let w = lit::<T>(binomial(r, j)) * a.powi(j as i32);
                    s0 = s0 + w * lit(odd_double_factorial(j));
                    s1 = s1 + w * lit(odd_double_factorial(j + 1));
                    terms.push(w);
                }
                let norm_const = s0.recip();
                let mu2 = s1 / s0;
                let cumulative = {
                    let mut acc = 0.0;
                    (0..=r)
                        .map(|j| {
                            acc += to_f64(norm_const * terms[j as usize])
                                * odd_double_factorial(j);
                            acc
                        })
                        .collect::<Vec<_>>()
                };
                let shapes = (0..=r)
                    .map(|j| Gamma::new(f64::from(j) + 0.5, 1.0).expect("positive shape"))
                    .collect();
                Ok(Self {
                    spec,
                    consts: FamilyConstants::Sts {
                        lambda,
                        norm_const,
                        mu2,
                    },
                    kind: Kernel::Sts {
                        r,
                        lambda,
                        a,
                        terms,
                        norm_const,
                        mu2,
                    },
                    sampler: Sampler::Mixture { cumulative, shapes },
                })
            }
            FamilySpec::Lts { p } => {
                let pt: T = lit(p);
                let k = pt * lit(2.0) - lit(3.0);
                let dof = pt * lit(2.0) - T::one();
                let norm = (ln_gamma(pt) - ln_gamma(pt - lit(0.5))).exp() / (k * T::PI()).sqrt();
                let dof_f = 2.0 * p - 1.0;
                Ok(Self {
                    spec,
                    consts: FamilyConstants::Lts { k, dof, norm },
                    kind: Kernel::Lts { p: pt, k, dof, norm },
                    sampler: Sampler::StudentT {
                        dist: StudentT::new(dof_f).map_err(|e| {
                            Error::ParameterDomain(format!("Student-t sampler: {e}"))
                        })?,
                        scale: ((2.0 * p - 3.0) / dof_f).sqrt(),
                    },
                })
            }
        }
    }

    pub fn spec(&self) -> FamilySpec {
        self.spec
    }

    pub fn constants(&self) -> &FamilyConstants<T> {
        &self.consts
    }

    /// STS `λ`; `None` for LTS.
    pub fn lambda(&self) -> Option<T> {
        match &self.kind {
            Kernel::Sts { lambda, .. } => Some(*lambda),
            Kernel::Lts { .. } => None,
        }
    }

    /// Mixture weights of the STS sampler (component `j` has `|z|² ~ χ²(2j+1)`).
    pub fn mixture_weights(&self) -> Option<Vec<T>> {
        match &self.kind {
            Kernel::Sts {
                terms, norm_const, ..
            } => Some(
                terms
                    .iter()
                    .enumerate()
                    .map(|(j, &w)| *norm_const * w * lit(odd_double_factorial(j as u32)))
                    .collect(),
            ),
            Kernel::Lts { .. } => None,
        }
    }

    /// STS distribution function for `z <= 0`, where every recursion term is nonnegative.
    fn sts_lower_cdf(&self, z: T) -> T {
        let Kernel::Sts {
            r,
            terms,
            norm_const,
            ..
        } = &self.kind
        else {
            unreachable!("STS kernel");
        };
        let phi = norm_pdf(z);
        let z2 = z * z;
        let mut moment = norm_cdf(z);
        let mut acc = terms[0] * moment;
        let mut zpow = z;
        for j in 1..=*r {
            moment = lit::<T>(f64::from(2 * j - 1)) * moment - zpow * phi;
            acc = acc + terms[j as usize] * moment;
            zpow = zpow * z2;
        }
        *norm_const * acc
    }

    fn lts_lower_cdf(&self, z: T) -> T {
        let Kernel::Lts { k, dof, .. } = &self.kind else {
            unreachable!("LTS kernel");
        };
        let x = *k / (*k + z * z);
        let half: T = lit(0.5);
        beta_inc(*dof * half, half, x)
            .map(|v| v * half)
            .unwrap_or_else(|_| T::nan())
    }

    fn lower_cdf(&self, z: T) -> T {
        match self.kind {
            Kernel::Sts { .. } => self.sts_lower_cdf(z),
            Kernel::Lts { .. } => self.lts_lower_cdf(z),
        }
    }

    /// Draws one standardized variate.
    pub fn draw_standard<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let z = match &self.sampler {
            Sampler::Mixture { cumulative, shapes } => {
                let u: f64 = rng.random::<f64>() * cumulative[cumulative.len() - 1];
                let j = cumulative
                    .iter()
                    .position(|&c| u < c)
                    .unwrap_or(cumulative.len() - 1);
                let radius = (2.0 * shapes[j].sample(rng)).sqrt();
                if rng.random::<bool>() {
                    radius
                } else {
                    -radius
                }
            }
            Sampler::StudentT { dist, scale } => dist.sample(rng) * scale,
        };
        lit(z)
    }

    /// `n` i.i.d. draws under `loc`, sorted ascending.
    pub fn sample<R: Rng + ?Sized>(&self, loc: LocScale<T>, n: usize, rng: &mut R) -> Vec<T> {
        let mut xs: Vec<T> = (0..n)
            .map(|_| loc.mu + loc.sigma * self.draw_standard(rng))
            .collect();
        xs.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
        xs
    }
}

impl<T: Real> LocationScaleFamily<T> for Family<T> {
    fn pdf(&self, z: T) -> T {
        match &self.kind {
            Kernel::Sts {
                r, a, norm_const, ..
            } => *norm_const * (T::one() + *a * z * z).powi(*r as i32) * norm_pdf(z),
            Kernel::Lts { p, k, norm, .. } => *norm * (T::one() + z * z / *k).powf(-*p),
        }
    }

    fn cdf(&self, z: T) -> T {
        if z <= T::zero() {
            self.lower_cdf(z)
        } else {
            T::one() - self.lower_cdf(-z)
        }
    }

    fn sf(&self, z: T) -> T {
        self.cdf(-z)
    }

    fn score(&self, z: T) -> T {
        match &self.kind {
            Kernel::Sts { lambda, a, .. } => z - *lambda * z / (T::one() + *a * z * z),
            Kernel::Lts { p, k, .. } => {
                lit::<T>(2.0) * *p / *k * z / (T::one() + z * z / *k)
            }
        }
    }

    fn score_derivative(&self, z: T) -> T {
        match &self.kind {
            Kernel::Sts { lambda, a, .. } => {
                let u = *a * z * z;
                T::one() - *lambda * (T::one() - u) / ((T::one() + u) * (T::one() + u))
            }
            Kernel::Lts { p, k, .. } => {
                let u = z * z / *k;
                lit::<T>(2.0) * *p / *k * (T::one() - u) / ((T::one() + u) * (T::one() + u))
            }
        }
    }

    fn variance(&self) -> T {
        match &self.kind {
            Kernel::Sts { mu2, .. } => *mu2,
            Kernel::Lts { .. } => T::one(),
        }
    }
}

/// Exact STS constants over the rationals.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactStsConstants {
    pub lambda: BigRational,
    pub norm_const: BigRational,
    pub mu2: BigRational,
}

/// Evaluates `λ`, `C` and `μ₂` exactly for rational `d`.
pub fn sts_constants_exact(r: u32, d: &BigRational) -> Result<ExactStsConstants> {
    let rr = BigRational::from_integer(r.into());
    if r == 0 || *d >= rr {
        return Err(Error::ParameterDomain(format!(
            "STS requires r >= 1 and d < r (r = {r}, d = {d})"
        )));
    }
    let lambda = &rr / (&rr - d);
    let a = &lambda / (BigRational::from_integer(2.into()) * &rr);
    let mut s0 = BigRational::zero();
    let mut s1 = BigRational::zero();
    let mut binom = BigRational::one();
    let mut a_pow = BigRational::one();
    let mut dfact = BigRational::one(); // (2j-1)!!
    for j in 0..=r {
        if j > 0 {
            binom = binom * BigRational::from_integer((r - j + 1).into())
                / BigRational::from_integer(j.into());
            a_pow = &a_pow * &a;
            dfact = dfact * BigRational::from_integer((2 * j - 1).into());
        }
        let w = &binom * &a_pow;
        s0 += &w * &dfact;
        s1 += &w * &dfact * BigRational::from_integer((2 * j + 1).into());
    }
    Ok(ExactStsConstants {
        lambda,
        norm_const: s0.recip(),
        mu2: s1 / s0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate_real_line, QuadratureOptions};
    use num_traits::ToPrimitive;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sts20() -> Family<f64> {
        Family::new(FamilySpec::sts(2, 0.0)).unwrap()
    }

    #[test]
    fn sts_constants_match_closed_form() {
        let f = sts20();
        let FamilyConstants::Sts {
            lambda,
            norm_const,
            mu2,
        } = *f.constants()
        else {
            panic!("expected STS constants");
        };
        assert_eq!(lambda, 1.0);
        assert!((norm_const - 16.0 / 27.0).abs() < 1e-15);
        assert!((mu2 - 55.0 / 27.0).abs() < 1e-15);
        let exact = sts_constants_exact(2, &BigRational::zero()).unwrap();
        assert_eq!(exact.norm_const, BigRational::new(16.into(), 27.into()));
        assert_eq!(exact.mu2, BigRational::new(55.into(), 27.into()));
    }

    #[test]
    fn lts_constants() {
        let f: Family<f64> = Family::new(FamilySpec::lts(3.0)).unwrap();
        let FamilyConstants::Lts { k, dof, .. } = *f.constants() else {
            panic!("expected LTS constants");
        };
        assert_eq!(k, 3.0);
        assert_eq!(dof, 5.0);
        // 1 / (sqrt(3) B(1/2, 5/2)) = 8 / (3 sqrt(3) pi)
        let expected = 8.0 / (3.0 * 3f64.sqrt() * std::f64::consts::PI);
        assert!((f.pdf(0.0) - expected).abs() < 1e-14);
        assert!((f.pdf(0.0) - 0.49007).abs() < 1e-5);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(Family::<f64>::new(FamilySpec::sts(2, 2.0)).is_err());
        assert!(Family::<f64>::new(FamilySpec::sts(0, -1.0)).is_err());
        assert!(Family::<f64>::new(FamilySpec::lts(1.9)).is_err());
        assert!(Family::<f64>::new(FamilySpec::sts(2, 1.0)).is_ok());
        assert!(Family::<f64>::new(FamilySpec::sts(2, 1.5)).is_ok());
        assert!(LocScale::new(0.0, 0.0).is_err());
    }

    #[test]
    fn sts_pdf_and_cdf_reference_values() {
        let f = sts20();
        assert!((f.pdf(0.0) - 16.0 / 27.0 * norm_pdf(0.0)).abs() < 1e-15);
        assert!((f.pdf(0.0) - 0.236_411).abs() < 1e-6);
        assert_eq!(f.cdf(0.0), 0.5);
        assert!((f.cdf(1.0) - 0.733_802_201_837_812_4).abs() < 1e-13);
        assert!((f.quantile(0.733_802_201_837_812_4).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn sts_cdf_matches_quadrature() {
        let f = sts20();
        for &z in &[-3.0, -1.2, 0.4, 2.5] {
            let q = integrate_real_line(
                |x: f64| if x <= z { f.pdf(x) } else { 0.0 },
                z,
                QuadratureOptions::default(),
            )
            .unwrap();
            assert!((q.value - f.cdf(z)).abs() < 1e-10, "z = {z}");
        }
    }

    #[test]
    fn hazard_definition_and_center() {
        let f = sts20();
        assert!((f.hazard(0.0).unwrap() - 2.0 * f.pdf(0.0)).abs() < 1e-15);
        let z = f.quantile(0.5).unwrap();
        assert!((f.hazard(z).unwrap() - 0.4728).abs() < 5e-5);
        assert!(matches!(
            f.hazard(60.0),
            Err(Error::HazardSaturated { .. })
        ));
    }

    #[test]
    fn hazard_derivative_matches_finite_difference() {
        for spec in [FamilySpec::sts(2, 0.0), FamilySpec::sts(3, 1.0), FamilySpec::lts(3.0)] {
            let f: Family<f64> = Family::new(spec).unwrap();
            for &z in &[-1.5, 0.0, 0.7, 2.0] {
                let eps = 1e-5;
                let fd = (f.hazard(z + eps).unwrap() - f.hazard(z - eps).unwrap()) / (2.0 * eps);
                assert!((fd - f.hazard_derivative(z).unwrap()).abs() < 1e-7, "{spec} z = {z}");
                let fd = -(f.pdf(z + eps).ln() - f.pdf(z - eps).ln()) / (2.0 * eps);
                assert!((fd - f.score(z)).abs() < 1e-7, "{spec} z = {z}");
                let fd = (f.score(z + eps) - f.score(z - eps)) / (2.0 * eps);
                assert!((fd - f.score_derivative(z)).abs() < 1e-7, "{spec} z = {z}");
            }
        }
    }

    #[test]
    fn mixture_weights_sum_to_one() {
        let w = sts20().mixture_weights().unwrap();
        let expected = [16.0 / 27.0, 8.0 / 27.0, 3.0 / 27.0];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn samples_are_sorted_and_located() {
        let f = sts20();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs = f.sample(LocScale::new(10.0, 2.0).unwrap(), 500, &mut rng);
        assert!(xs.windows(2).all(|w| w[0] <= w[1]));
        let mean = xs.iter().sum::<f64>() / 500.0;
        assert!((mean - 10.0).abs() < 0.5);
    }

    #[test]
    fn exact_constants_for_fractional_d() {
        let d = BigRational::new((-1).into(), 2.into());
        let exact = sts_constants_exact(3, &d).unwrap();
        let f: Family<f64> = Family::new(FamilySpec::sts(3, -0.5)).unwrap();
        let FamilyConstants::Sts {
            norm_const, mu2, ..
        } = *f.constants()
        else {
            unreachable!()
        };
        assert!((exact.norm_const.to_f64().unwrap() - norm_const).abs() < 1e-15);
        assert!((exact.mu2.to_f64().unwrap() - mu2).abs() < 1e-14);
    }

    #[test]
    fn single_precision_family() {
        let f: Family<f32> = Family::new(FamilySpec::sts(2, 0.0)).unwrap();
        assert!((f.cdf(1.0) - 0.733_804).abs() < 1e-5);
        assert!((f.quantile(0.9).unwrap() + f.quantile(0.1).unwrap()).abs() < 1e-5);
    }
}
