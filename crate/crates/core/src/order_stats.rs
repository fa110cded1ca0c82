//! Expected values of standardized order statistics, `m_i = E[z_(i)]`.
//!
//! Computed by quadrature of `z · n!/((i-1)!(n-i)!) F^{i-1} (1-F)^{n-i} f`
//! (default) or by Monte Carlo averaging of sorted samples. Results can be
//! persisted in a plain-text cache keyed by family, `n` and method.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{Family, FamilySpec, LocationScaleFamily};
use crate::quadrature::{integrate_real_line, QuadratureOptions};
use crate::rng::{fnv1a64, rng_stream};
use crate::scalar::{from_usize, lit, to_f64, Real};
use crate::special::ln_gamma;

/// Environment variable naming the order-statistic cache directory.
pub const CACHE_DIR_ENV: &str = "LSHAZARD_CACHE_DIR";

const CACHE_FORMAT: &str = "lshazard-order-stats/1";
const MC_CHUNK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderStatMethod {
    Quadrature,
    MonteCarlo,
}

impl OrderStatMethod {
    fn as_str(&self) -> &'static str {
        match self {
            OrderStatMethod::Quadrature => "quadrature",
            OrderStatMethod::MonteCarlo => "monte_carlo",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct OrderStatOptions {
    pub quadrature: QuadratureOptions,
    pub mc_replicates: usize,
    /// Monte Carlo seed; derived from the cache key when `None`.
    pub seed: Option<u64>,
}

impl Default for OrderStatOptions {
    fn default() -> Self {
        Self {
            quadrature: QuadratureOptions {
                abs_tol: 1e-11,
                rel_tol: 1e-10,
                max_intervals: 400,
            },
            mc_replicates: 1_000_000,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpectedOrderStats<T> {
    pub spec: FamilySpec,
    pub n: usize,
    /// `m_1 <= ... <= m_n`.
    pub values: Vec<T>,
    /// Method that produced `values`.
    pub method: OrderStatMethod,
    /// Per-entry error estimate (quadrature) or standard error (Monte Carlo).
    pub precision: Vec<T>,
    /// Quadrature failed and Monte Carlo was used instead.
    pub fell_back: bool,
}

impl<T: Real> ExpectedOrderStats<T> {
    pub fn get(&self, i: usize) -> T {
        self.values[i - 1]
    }

    pub fn max_precision(&self) -> T {
        self.precision
            .iter()
            .fold(T::zero(), |acc, &p| if p > acc { p } else { acc })
    }
}

fn symmetrize<T: Real>(values: &mut [T], precision: &mut [T]) {
    let n = values.len();
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let m = (values[j] - values[i]) / lit(2.0);
        values[i] = -m;
        values[j] = m;
        let p = precision[i].max(precision[j]);
        precision[i] = p;
        precision[j] = p;
    }
    if n % 2 == 1 {
        values[n / 2] = T::zero();
    }
}

/// Quadrature route for any symmetric location-scale family.
///
/// Returns the symmetrized values and per-entry error estimates.
pub fn quadrature_order_stats<T: Real, F: LocationScaleFamily<T>>(
    family: &F,
    n: usize,
    opts: QuadratureOptions,
) -> Result<(Vec<T>, Vec<T>)> {
    if n == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let nf: T = from_usize(n);
    let ln_n_fact = ln_gamma(nf + T::one());
    let mut values = Vec::with_capacity(n);
    let mut precision = Vec::with_capacity(n);
    for i in 1..=n {
        let below: T = from_usize(i - 1);
        let above: T = from_usize(n - i);
        let ln_coef = ln_n_fact - ln_gamma(below + T::one()) - ln_gamma(above + T::one());
        let integrand = |z: T| {
            let f = family.pdf(z);
            if f <= T::zero() {
                return T::zero();
            }
            let mut ln_w = ln_coef + f.ln();
            if i > 1 {
                ln_w = ln_w + below * family.cdf(z).ln();
            }
            if i < n {
                ln_w = ln_w + above * family.sf(z).ln();
            }
            let w = ln_w.exp();
            if w.is_finite() {
                z * w
            } else {
                T::zero()
            }
        };
        let split = family.quantile(from_usize::<T>(i) / (nf + T::one()))?;
        let res = integrate_real_line(integrand, split, opts)?;
        values.push(res.value);
        precision.push(res.error);
    }
    symmetrize(&mut values, &mut precision);
    Ok((values, precision))
}

/// Monte Carlo route: average sorted standardized samples over `replicates` draws.
pub fn monte_carlo_order_stats<T: Real>(
    family: &Family<T>,
    n: usize,
    replicates: usize,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    if n == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if replicates < 2 {
        return Err(Error::Domain("Monte Carlo needs at least 2 replicates".into()));
    }
    let chunks = replicates.div_ceil(MC_CHUNK);
    let partial: Vec<(Vec<f64>, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_stream(seed, c as u64);
            let count = MC_CHUNK.min(replicates - c * MC_CHUNK);
            let mut sum = vec![0.0; n];
            let mut sum_sq = vec![0.0; n];
            let mut buf = vec![0.0; n];
            for _ in 0..count {
                for slot in buf.iter_mut() {
                    *slot = to_f64(family.draw_standard(&mut rng));
                }
                buf.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
                for (j, &z) in buf.iter().enumerate() {
                    sum[j] += z;
                    sum_sq[j] += z * z;
                }
            }
            (sum, sum_sq)
        })
        .collect();
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    for (s, q) in partial {
        for j in 0..n {
            sum[j] += s[j];
            sum_sq[j] += q[j];
        }
    }
    let reps = replicates as f64;
    let mut values = Vec::with_capacity(n);
    let mut precision = Vec::with_capacity(n);
    for j in 0..n {
        let mean = sum[j] / reps;
        let var = ((sum_sq[j] - reps * mean * mean) / (reps - 1.0)).max(0.0);
        values.push(lit::<T>(mean));
        precision.push(lit::<T>((var / reps).sqrt()));
    }
    symmetrize(&mut values, &mut precision);
    Ok((values, precision))
}

/// Seed derived from the cache key, so Monte Carlo tables are reproducible.
pub fn key_seed(spec: &FamilySpec, n: usize, method: OrderStatMethod) -> u64 {
    fnv1a64(format!("{}_n{}_{}", spec.label(), n, method.as_str()).as_bytes())
}

/// Expected standardized order statistics of `family` for sample size `n`.
pub fn expected_order_stats<T: Real>(
    family: &Family<T>,
    n: usize,
    method: OrderStatMethod,
    opts: &OrderStatOptions,
) -> Result<ExpectedOrderStats<T>> {
    let spec = family.spec();
    let seed = opts
        .seed
        .unwrap_or_else(|| key_seed(&spec, n, OrderStatMethod::MonteCarlo));
    let (values, precision, method, fell_back) = match method {
        OrderStatMethod::Quadrature => match quadrature_order_stats(family, n, opts.quadrature) {
            Ok((v, p)) => (v, p, OrderStatMethod::Quadrature, false),
            Err(e @ Error::InsufficientData { .. }) => return Err(e),
            Err(e) => {
                warn!("{spec}, n = {n}: quadrature failed ({e}); falling back to Monte Carlo");
                let (v, p) = monte_carlo_order_stats(family, n, opts.mc_replicates, seed)?;
                (v, p, OrderStatMethod::MonteCarlo, true)
            }
        },
        OrderStatMethod::MonteCarlo => {
            let (v, p) = monte_carlo_order_stats(family, n, opts.mc_replicates, seed)?;
            (v, p, OrderStatMethod::MonteCarlo, false)
        }
    };
    Ok(ExpectedOrderStats {
        spec,
        n,
        values,
        method,
        precision,
        fell_back,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheHeader {
    format: String,
    family: FamilySpec,
    n: usize,
    /// Method the table was requested with (part of the cache key).
    method: OrderStatMethod,
    computed_by: OrderStatMethod,
    precision: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CacheOutcome {
    Hit,
    Miss,
    /// The file existed but was invalid and has been overwritten.
    Recomputed(String),
}

/// Directory-backed store of expected order statistic tables.
#[derive(Clone, Debug)]
pub struct OrderStatCache {
    dir: PathBuf,
}

impl OrderStatCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// Cache rooted at `$LSHAZARD_CACHE_DIR`, if set.
    pub fn from_env() -> Option<Self> {
        std::env::var_os(CACHE_DIR_ENV).map(Self::new)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, spec: &FamilySpec, n: usize) -> PathBuf {
        self.dir.join(format!("{}_n{}.csv", spec.label(), n))
    }

    /// Loads a table; `Ok(None)` on a miss, `Err(Cache)` when the file is invalid.
    pub fn load(
        &self,
        spec: &FamilySpec,
        n: usize,
        method: OrderStatMethod,
    ) -> Result<Option<ExpectedOrderStats<f64>>> {
        let path = self.path_for(spec, n);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(&path, e)),
        };
        parse_table(&text, spec, n, method)
            .map(Some)
            .map_err(|reason| Error::Cache { path, reason })
    }

    /// Writes a table atomically (temporary file, then rename).
    pub fn store(&self, table: &ExpectedOrderStats<f64>, key_method: OrderStatMethod) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let path = self.path_for(&table.spec, table.n);
        let header = CacheHeader {
            format: CACHE_FORMAT.into(),
            family: table.spec,
            n: table.n,
            method: key_method,
            computed_by: table.method,
            precision: table.max_precision(),
        };
        let mut body = serde_json::to_string(&header)?;
        body.push('\n');
        body.push_str("i,m,precision\n");
        for (i, (v, p)) in table.values.iter().zip(&table.precision).enumerate() {
            body.push_str(&format!("{},{},{}\n", i + 1, v, p));
        }
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        tmp.write_all(body.as_bytes())
            .map_err(|e| Error::io(tmp.path(), e))?;
        tmp.persist(&path).map_err(|e| Error::io(&path, e.error))?;
        Ok(path)
    }

    /// Returns the cached table or computes and stores it.
    pub fn get_or_compute(
        &self,
        family: &Family<f64>,
        n: usize,
        method: OrderStatMethod,
        opts: &OrderStatOptions,
    ) -> Result<(ExpectedOrderStats<f64>, CacheOutcome)> {
        let spec = family.spec();
        let outcome = match self.load(&spec, n, method) {
            Ok(Some(table)) => return Ok((table, CacheOutcome::Hit)),
            Ok(None) => CacheOutcome::Miss,
            Err(Error::Cache { path, reason }) => {
                warn!("{}: {reason}; recomputing", path.display());
                CacheOutcome::Recomputed(reason)
            }
            Err(e) => return Err(e),
        };
        let table = expected_order_stats(family, n, method, opts)?;
        self.store(&table, method)?;
        Ok((table, outcome))
    }
}

fn parse_table(
    text: &str,
    spec: &FamilySpec,
    n: usize,
    method: OrderStatMethod,
) -> std::result::Result<ExpectedOrderStats<f64>, String> {
    let mut lines = text.lines();
    let header: CacheHeader = serde_json::from_str(lines.next().ok_or("empty file")?)
        .map_err(|e| format!("bad header: {e}"))?;
    if header.format != CACHE_FORMAT {
        return Err(format!("unknown format {:?}", header.format));
    }
    if header.family != *spec {
        return Err(format!("family mismatch: file has {}", header.family));
    }
    if header.n != n {
        return Err(format!("sample size mismatch: file has n = {}", header.n));
    }
    if header.method != method {
        return Err(format!("method mismatch: file has {}", header.method.as_str()));
    }
    if lines.next() != Some("i,m,precision") {
        return Err("missing column header".into());
    }
    let mut values = Vec::with_capacity(n);
    let mut precision = Vec::with_capacity(n);
    for (row, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(format!("row {}: expected 3 fields", row + 1));
        }
        let i: usize = fields[0].parse().map_err(|_| format!("row {}: bad index", row + 1))?;
        if i != row + 1 {
            return Err(format!("row {}: index {i} out of sequence", row + 1));
        }
        values.push(fields[1].parse::<f64>().map_err(|_| format!("row {i}: bad value"))?);
        precision.push(fields[2].parse::<f64>().map_err(|_| format!("row {i}: bad precision"))?);
    }
    if values.len() != n {
        return Err(format!("expected {n} rows, found {}", values.len()));
    }
    if values.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err("values are not nondecreasing".into());
    }
    Ok(ExpectedOrderStats {
        spec: *spec,
        n,
        values,
        method: header.computed_by,
        precision,
        fell_back: header.computed_by != header.method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sts20() -> Family<f64> {
        Family::new(FamilySpec::sts(2, 0.0)).unwrap()
    }

    #[test]
    fn trivial_sizes() {
        let f = sts20();
        let opts = OrderStatOptions::default();
        let one = expected_order_stats(&f, 1, OrderStatMethod::Quadrature, &opts).unwrap();
        assert_eq!(one.values, vec![0.0]);
        let two = expected_order_stats(&f, 2, OrderStatMethod::Quadrature, &opts).unwrap();
        assert_eq!(two.values[0], -two.values[1]);
        assert!(two.values[1] > 0.0);
        assert!(expected_order_stats(&f, 0, OrderStatMethod::Quadrature, &opts).is_err());
    }

    #[test]
    fn invariants_hold_for_n20() {
        let f = sts20();
        let t = expected_order_stats(&f, 20, OrderStatMethod::Quadrature, &OrderStatOptions::default())
            .unwrap();
        assert!(t.values.windows(2).all(|w| w[1] - w[0] > 0.0));
        assert!(t.values.iter().sum::<f64>().abs() < 1e-12);
        assert!(t.max_precision() < 1e-6);
        assert!(!t.fell_back);
    }

    #[test]
    fn cache_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let cache = OrderStatCache::new(dir.path());
        let f = sts20();
        let opts = OrderStatOptions::default();
        let (first, outcome) = cache
            .get_or_compute(&f, 8, OrderStatMethod::Quadrature, &opts)
            .unwrap();
        assert_eq!(outcome, CacheOutcome::Miss);
        let path = cache.path_for(&f.spec(), 8);
        assert_eq!(path.file_name().unwrap(), "sts_r2_d0_n8.csv");
        let loaded = cache
            .load(&f.spec(), 8, OrderStatMethod::Quadrature)
            .unwrap()
            .unwrap();
        assert_eq!(loaded.values, first.values);
        assert_eq!(loaded.precision, first.precision);
        let (_, outcome) = cache
            .get_or_compute(&f, 8, OrderStatMethod::Quadrature, &opts)
            .unwrap();
        assert_eq!(outcome, CacheOutcome::Hit);

        // a header claiming a different n is rejected and recomputed
        let text = fs::read_to_string(&path).unwrap().replacen("\"n\":8", "\"n\":9", 1);
        fs::write(&path, text).unwrap();
        assert!(matches!(
            cache.load(&f.spec(), 8, OrderStatMethod::Quadrature),
            Err(Error::Cache { .. })
        ));
        let (again, outcome) = cache
            .get_or_compute(&f, 8, OrderStatMethod::Quadrature, &opts)
            .unwrap();
        assert!(matches!(outcome, CacheOutcome::Recomputed(_)));
        assert_eq!(again.values, first.values);

        fs::write(&path, "garbage").unwrap();
        assert!(cache.load(&f.spec(), 8, OrderStatMethod::Quadrature).is_err());
    }
}
