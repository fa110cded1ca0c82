//! Deterministic parallel Monte Carlo studies of the hazard estimators.
//!
//! Replicate `i` draws from [`rng_stream(seed, i)`](crate::rng::rng_stream).
//! Replicates are grouped in fixed-size chunks, each chunk is summarized
//! sequentially, and chunk summaries are merged in chunk order, so reports are
//! bit-identical for any number of worker threads.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    ls_estimate, CensoredMml, CoefficientVariant, MEffSource, MmlOptions, ObservedSample,
    ParamEstimate, StsScaleVariant,
};
use crate::families::{Family, FamilySpec, LocScale, LocationScaleFamily};
use crate::hazard::{bracket, estimate_hazard_with_critical, HazardTable};
use crate::order_stats::{
    expected_order_stats, ExpectedOrderStats, OrderStatCache, OrderStatMethod, OrderStatOptions,
};
use crate::predict::{predict_all, MmlPredictor, PredictorMethod};
use crate::reference::{self, ReferenceTable};
use crate::rng::rng_stream;
use crate::special::two_sided_critical;

/// Replicates per work unit.
const CHUNK: usize = 512;

/// Largest tolerated fraction of failed replicates.
pub const FAILURE_LIMIT: f64 = 0.001;

/// The 19-point quantile grid of the standard n = 20 tables.
pub const STANDARD_GRID: [f64; 19] = [
    0.07, 0.12, 0.17, 0.21, 0.26, 0.31, 0.36, 0.40, 0.45, 0.50, 0.55, 0.60, 0.64, 0.69, 0.74,
    0.79, 0.83, 0.88, 0.93,
];

/// [`STANDARD_GRID`] with 0.59 in place of 0.60, as in the LTS coverage table.
pub const STANDARD_GRID_ALT: [f64; 19] = [
    0.07, 0.12, 0.17, 0.21, 0.26, 0.31, 0.36, 0.40, 0.45, 0.50, 0.55, 0.59, 0.64, 0.69, 0.74,
    0.79, 0.83, 0.88, 0.93,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Hr1Mml,
    Hr1Ls,
    Hr2Mml,
    Hr2Ls,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::Hr1Mml,
        EstimatorKind::Hr1Ls,
        EstimatorKind::Hr2Mml,
        EstimatorKind::Hr2Ls,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Hr1Mml => "hr1_mml",
            EstimatorKind::Hr1Ls => "hr1_ls",
            EstimatorKind::Hr2Mml => "hr2_mml",
            EstimatorKind::Hr2Ls => "hr2_ls",
        }
    }

    fn is_ls(&self) -> bool {
        matches!(self, EstimatorKind::Hr1Ls | EstimatorKind::Hr2Ls)
    }

    fn is_hr2(&self) -> bool {
        matches!(self, EstimatorKind::Hr2Mml | EstimatorKind::Hr2Ls)
    }

    /// Column in the reference tables.
    fn reference_column(&self) -> usize {
        match self {
            EstimatorKind::Hr1Mml => 0,
            EstimatorKind::Hr1Ls => 1,
            EstimatorKind::Hr2Mml => 2,
            EstimatorKind::Hr2Ls => 3,
        }
    }
}

/// A quantile grid: a preset name or explicit probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Preset(String),
    Values(Vec<f64>),
}

impl GridSpec {
    /// Presets: `standard` (19 points, 0.07 to 0.93), `standard_alt` (0.59 for
    /// 0.60) and `midpoints` (`(j - 1/2)/(n + 1)`, `j = 2..=n`).
    pub fn resolve(&self, n: usize) -> Result<Vec<f64>> {
        let grid = match self {
            GridSpec::Values(v) => v.clone(),
            GridSpec::Preset(name) => match name.as_str() {
                "standard" => STANDARD_GRID.to_vec(),
                "standard_alt" => STANDARD_GRID_ALT.to_vec(),
                "midpoints" => (2..=n)
                    .map(|j| (j as f64 - 0.5) / (n as f64 + 1.0))
                    .collect(),
                other => {
                    return Err(Error::Parse(format!("unknown quantile grid preset {other:?}")))
                }
            },
        };
        if grid.is_empty() {
            return Err(Error::Domain("quantile grid is empty".into()));
        }
        if grid.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
            return Err(Error::Domain("quantile grid must lie in (0, 1)".into()));
        }
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Domain("quantile grid must be strictly increasing".into()));
        }
        Ok(grid)
    }
}

fn default_level() -> f64 {
    0.95
}
fn default_replicates() -> usize {
    100_000
}
fn default_estimators() -> Vec<EstimatorKind> {
    EstimatorKind::ALL.to_vec()
}
fn default_grid() -> GridSpec {
    GridSpec::Preset("standard".into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: FamilySpec,
    pub n: usize,
    /// Observed count; `None` means a complete sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(default = "LocScale::standard")]
    pub true_loc: LocScale<f64>,
    #[serde(default = "default_grid")]
    pub quantile_grid: GridSpec,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    /// STS quadratic coefficient variant; calibrated against the reference
    /// table when `None` and a reference is given, else `unit`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sts_scale: Option<StsScaleVariant>,
    /// Predictor used to complete censored samples.
    #[serde(default)]
    pub predictor: PredictorMethod,
    /// Reference table for side-by-side columns (`sts_r2_d0`, `lts_p3`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

impl ExperimentConfig {
    pub fn new(family: FamilySpec, n: usize) -> Self {
        Self {
            family,
            n,
            r: None,
            true_loc: LocScale::standard(),
            quantile_grid: default_grid(),
            level: default_level(),
            replicates: default_replicates(),
            seed: 0,
            estimators: default_estimators(),
            sts_scale: None,
            predictor: PredictorMethod::default(),
            reference: None,
        }
    }

    /// Named configurations: `table1`..`table4`, `figure1`, `figure2`.
    pub fn preset(name: &str) -> Result<Self> {
        let sts = FamilySpec::sts(2, 0.0);
        let lts = FamilySpec::lts(3.0);
        let with_ref = |mut c: Self, r: &str| {
            c.reference = Some(r.into());
            c
        };
        let cfg = match name {
            "table1" | "table2" => with_ref(Self::new(sts, 20), "sts_r2_d0"),
            "table3" => with_ref(Self::new(lts, 20), "lts_p3"),
            "table4" => {
                let mut c = with_ref(Self::new(lts, 20), "lts_p3");
                c.quantile_grid = GridSpec::Preset("standard_alt".into());
                c
            }
            "figure1" => {
                let mut c = Self::new(sts, 20);
                c.estimators = vec![EstimatorKind::Hr2Mml];
                c
            }
            "figure2" => {
                let mut c = Self::new(FamilySpec::sts(2, 1.0), 50);
                c.estimators = vec![EstimatorKind::Hr2Mml];
                c
            }
            other => return Err(Error::Parse(format!("unknown experiment preset {other:?}"))),
        };
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn observed(&self) -> usize {
        self.r.unwrap_or(self.n)
    }

    pub fn validate(&self) -> Result<()> {
        self.family.validate()?;
        if self.n < 2 {
            return Err(Error::InsufficientData { needed: 2, got: self.n });
        }
        let r = self.observed();
        if r < 2 || r > self.n {
            return Err(Error::Domain(format!("need 2 <= r <= n (r = {r}, n = {})", self.n)));
        }
        if self.replicates < 1 {
            return Err(Error::Domain("replicates must be at least 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Domain(format!("level must lie in (0, 1), got {}", self.level)));
        }
        if self.estimators.is_empty() {
            return Err(Error::Domain("no estimators selected".into()));
        }
        if r < self.n && self.estimators.iter().any(EstimatorKind::is_ls) {
            return Err(Error::Domain(
                "least-squares estimators need complete samples (r = n)".into(),
            ));
        }
        LocScale::new(self.true_loc.mu, self.true_loc.sigma)?;
        self.quantile_grid.resolve(self.n)?;
        if let Some(name) = &self.reference {
            let table = self.reference_table()?.expect("named reference");
            if table.family != self.family || table.n != self.n {
                return Err(Error::Domain(format!(
                    "reference {name} is for {} with n = {}",
                    table.family, table.n
                )));
            }
        }
        Ok(())
    }

    fn reference_table(&self) -> Result<Option<&'static ReferenceTable>> {
        self.reference
            .as_deref()
            .map(|name| {
                reference::by_name(name)
                    .ok_or_else(|| Error::Parse(format!("unknown reference table {name:?}")))
            })
            .transpose()
    }
}

/// Running mean and sum of squared deviations, mergeable in a fixed order.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Moments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let total = self.count + other.count;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / total as f64;
        self.m2 += other.m2 + delta * delta * (self.count as f64 * other.count as f64) / total as f64;
        self.count = total;
    }

    fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    fn summary(&self) -> CellStat {
        let variance = self.variance();
        CellStat {
            mean: self.mean,
            variance,
            se: (variance / self.count.max(1) as f64).sqrt(),
            count: self.count,
        }
    }
}

/// Mean, variance and standard error of the mean of one quantity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellStat {
    pub mean: f64,
    pub variance: f64,
    pub se: f64,
    pub count: u64,
}

#[derive(Clone, Debug, Default)]
struct CellAccumulator {
    value: Moments,
    ci_low: Moments,
    ci_high: Moments,
    covered: u64,
    covered_reference: u64,
}

impl CellAccumulator {
    fn merge(&mut self, other: &CellAccumulator) {
        self.value.merge(&other.value);
        self.ci_low.merge(&other.ci_low);
        self.ci_high.merge(&other.ci_high);
        self.covered += other.covered;
        self.covered_reference += other.covered_reference;
    }
}

#[derive(Clone, Debug, Default)]
struct Partial {
    cells: Vec<CellAccumulator>,
    params: [Moments; 4],
    failures: u64,
    first_error: Option<String>,
}

impl Partial {
    fn new(cells: usize) -> Self {
        Self {
            cells: vec![CellAccumulator::default(); cells],
            ..Self::default()
        }
    }

    fn merge(&mut self, other: &Partial) {
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            a.merge(b);
        }
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            a.merge(b);
        }
        self.failures += other.failures;
        if self.first_error.is_none() {
            self.first_error.clone_from(&other.first_error);
        }
    }
}

/// Averages of the fitted parameters over successful replicates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub mml_mu: CellStat,
    pub mml_sigma: CellStat,
    pub ls_mu: Option<CellStat>,
    pub ls_sigma: Option<CellStat>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorCell {
    pub estimator: EstimatorKind,
    pub mean: f64,
    pub variance: f64,
    /// Standard error of `mean`.
    pub se_mean: f64,
    /// Fraction of intervals containing the true hazard (HR2 only).
    pub coverage: Option<f64>,
    pub se_coverage: Option<f64>,
    /// Fraction of intervals containing the reference table's exact value.
    pub coverage_vs_reference: Option<f64>,
    pub mean_ci_low: Option<f64>,
    pub mean_ci_high: Option<f64>,
    pub reference_mean: Option<f64>,
    pub reference_variance: Option<f64>,
    pub reference_coverage: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub q: f64,
    /// Time point on the data scale, `μ + σ F⁻¹(Q)`.
    pub t: f64,
    /// Standardized time point `F⁻¹(Q)`.
    pub delta: f64,
    /// Exact standardized hazard `h(F⁻¹(Q))`.
    pub exact: f64,
    pub reference_exact: Option<f64>,
    pub cells: Vec<EstimatorCell>,
}

impl ReportRow {
    pub fn cell(&self, kind: EstimatorKind) -> Option<&EstimatorCell> {
        self.cells.iter().find(|c| c.estimator == kind)
    }
}

/// Outcome of choosing the STS quadratic-coefficient variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleCalibration {
    pub target_sigma: f64,
    pub unit_sigma_mean: f64,
    pub lambda_sigma_mean: f64,
    pub chosen: StsScaleVariant,
    /// Both variants gave the same mean (they coincide when `d = 0`).
    pub tie: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub coefficient_variant: CoefficientVariant,
    pub replaced_coefficients: usize,
    pub sts_scale: Option<StsScaleVariant>,
    pub sts_scale_calibration: Option<ScaleCalibration>,
    /// `m_eff` of the complete-sample MML fit (replicate-specific when censored).
    pub m_eff: Option<f64>,
    pub m_eff_source: MEffSource,
    pub m_eff_formula: String,
    pub order_stat_method: OrderStatMethod,
    pub order_stat_precision: f64,
    pub critical_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub grid: Vec<f64>,
    pub metadata: ReportMetadata,
    pub parameters: ParameterSummary,
    pub rows: Vec<ReportRow>,
    pub replicates_used: u64,
    pub failures: u64,
    pub failure_fraction: f64,
    pub first_failure: Option<String>,
}

/// Wall-clock information, kept apart from the deterministic report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTiming {
    pub workers: usize,
    pub wall_seconds: f64,
}

/// Everything computed before the parallel section.
struct Prepared {
    family: Family<f64>,
    eos: ExpectedOrderStats<f64>,
    hazards: HazardTable<f64>,
    mml: CensoredMml<f64>,
    predictor: Option<MmlPredictor<f64>>,
    grid: Vec<f64>,
    deltas: Vec<f64>,
    exact: Vec<f64>,
    reference_exact: Vec<Option<f64>>,
    critical: f64,
    sts_scale: StsScaleVariant,
}

impl ExperimentReport {
    /// Error when more than [`FAILURE_LIMIT`] of the replicates failed.
    pub fn check_failures(&self) -> Result<()> {
        if self.failure_fraction > FAILURE_LIMIT {
            return Err(Error::ExcessiveFailures {
                fraction: self.failure_fraction,
                limit: FAILURE_LIMIT,
            });
        }
        Ok(())
    }

    pub fn row(&self, q: f64) -> Option<&ReportRow> {
        self.rows.iter().find(|r| (r.q - q).abs() < 1e-9)
    }

    /// One line per quantile; every number printed at full precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("q,t,delta,exact,reference_exact");
        let kinds: Vec<EstimatorKind> = self.config.estimators.clone();
        for k in &kinds {
            let n = k.name();
            write!(
                out,
                ",{n}_mean,{n}_var,{n}_se,{n}_coverage,{n}_se_coverage,{n}_coverage_vs_reference,{n}_ci_low,{n}_ci_high,{n}_reference_mean,{n}_reference_var,{n}_reference_coverage"
            )
            .unwrap();
        }
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.rows {
            write!(out, "{},{},{},{},{}", row.q, row.t, row.delta, row.exact, opt(row.reference_exact)).unwrap();
            for c in &row.cells {
                write!(
                    out,
                    ",{},{},{},{},{},{},{},{},{},{},{}",
                    c.mean,
                    c.variance,
                    c.se_mean,
                    opt(c.coverage),
                    opt(c.se_coverage),
                    opt(c.coverage_vs_reference),
                    opt(c.mean_ci_low),
                    opt(c.mean_ci_high),
                    opt(c.reference_mean),
                    opt(c.reference_variance),
                    opt(c.reference_coverage)
                )
                .unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Writes `report.csv`, `report.json` and (if given) `timing.json` into `dir`.
    pub fn write(&self, dir: &Path, timing: Option<&ExperimentTiming>) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let csv = dir.join("report.csv");
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        written.push(csv);
        let json = dir.join("report.json");
        std::fs::write(&json, serde_json::to_string_pretty(self)? + "\n")
            .map_err(|e| Error::io(&json, e))?;
        written.push(json);
        if let Some(t) = timing {
            let path = dir.join("timing.json");
            std::fs::write(&path, serde_json::to_string_pretty(t)? + "\n")
                .map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn load_order_stats(
    family: &Family<f64>,
    n: usize,
    cache: Option<&OrderStatCache>,
) -> Result<ExpectedOrderStats<f64>> {
    let opts = OrderStatOptions::default();
    match cache {
        Some(c) => Ok(c.get_or_compute(family, n, OrderStatMethod::Quadrature, &opts)?.0),
        None => expected_order_stats(family, n, OrderStatMethod::Quadrature, &opts),
    }
}

fn prepare(
    config: &ExperimentConfig,
    grid: Vec<f64>,
    sts_scale: StsScaleVariant,
    eos: ExpectedOrderStats<f64>,
) -> Result<Prepared> {
    let family = Family::new(config.family)?;
    let hazards = HazardTable::new(&family, &eos)?;
    let r = config.observed();
    let mml = CensoredMml::new(&family, &eos, r, MmlOptions { sts_scale })?;
    let predictor = if r < config.n && config.predictor == PredictorMethod::PredictiveMml {
        Some(MmlPredictor::new(&family, &eos, r)?)
    } else {
        None
    };
    let deltas = grid
        .iter()
        .map(|&q| family.quantile(q))
        .collect::<Result<Vec<_>>>()?;
    let exact = deltas
        .iter()
        .map(|&d| family.hazard(d))
        .collect::<Result<Vec<_>>>()?;
    let reference = config.reference_table()?;
    let reference_exact = grid
        .iter()
        .map(|&q| reference.and_then(|t| t.row(q).map(|i| t.exact[i])))
        .collect();
    Ok(Prepared {
        family,
        eos,
        hazards,
        mml,
        predictor,
        grid,
        deltas,
        exact,
        reference_exact,
        critical: two_sided_critical(config.level)?,
        sts_scale,
    })
}

fn run_replicate(
    config: &ExperimentConfig,
    prep: &Prepared,
    id: u64,
    acc: &mut Partial,
    scratch: &mut Vec<(usize, f64, Option<(f64, f64)>)>,
) -> Result<()> {
    let mut rng = rng_stream(config.seed, id);
    let mut xs = prep.family.sample(config.true_loc, config.n, &mut rng);
    let r = config.observed();
    xs.truncate(r);
    let sample = ObservedSample::new(xs, config.n)?;
    let mml = prep.mml.fit(&sample)?;
    let want_ls = config.estimators.iter().any(EstimatorKind::is_ls);
    let ls = if want_ls {
        Some(ls_estimate(&sample, &prep.family)?)
    } else {
        None
    };
    let brackets_from: Vec<f64> = if sample.is_complete() {
        sample.values().to_vec()
    } else {
        let predicted = match &prep.predictor {
            Some(p) => p.predict(&sample, &mml)?,
            None => predict_all(&sample, &prep.family, &prep.eos, &mml, config.predictor)?,
        };
        predicted.combined(&sample)
    };
    scratch.clear();
    let loc = config.true_loc;
    let kinds = &config.estimators;
    for (row, &delta) in prep.deltas.iter().enumerate() {
        let t = loc.mu + loc.sigma * delta;
        let lin = prep.hazards.linearize_bracket(bracket(&brackets_from, t)?)?;
        for (j, kind) in kinds.iter().enumerate() {
            let est: &ParamEstimate<f64> = if kind.is_ls() {
                ls.as_ref().expect("LS fitted")
            } else {
                &mml
            };
            let res = estimate_hazard_with_critical(est, &prep.family, &lin, t, config.level, prep.critical)?;
            let cell = row * kinds.len() + j;
            if kind.is_hr2() {
                scratch.push((cell, res.hr2, Some((res.ci_low, res.ci_high))));
            } else {
                let hr1 = res.hr1.ok_or_else(|| Error::HazardSaturated {
                    z: res.delta_hat,
                    floor: crate::families::SURVIVAL_FLOOR,
                })?;
                scratch.push((cell, hr1, None));
            }
        }
    }
    // commit only complete replicates
    for &(cell, value, ci) in scratch.iter() {
        let c = &mut acc.cells[cell];
        c.value.push(value);
        if let Some((lo, hi)) = ci {
            let row = cell / kinds.len();
            c.ci_low.push(lo);
            c.ci_high.push(hi);
            let exact = prep.exact[row];
            if lo <= exact && exact <= hi {
                c.covered += 1;
            }
            if let Some(reference) = prep.reference_exact[row] {
                if lo <= reference && reference <= hi {
                    c.covered_reference += 1;
                }
            }
        }
    }
    acc.params[0].push(mml.mu_hat);
    acc.params[1].push(mml.sigma_hat);
    if let Some(ls) = ls {
        acc.params[2].push(ls.mu_hat);
        acc.params[3].push(ls.sigma_hat);
    }
    Ok(())
}

fn simulate(config: &ExperimentConfig, prep: &Prepared, workers: usize) -> Result<Partial> {
    let cells = prep.grid.len() * config.estimators.len();
    let chunks = config.replicates.div_ceil(CHUNK);
    let run_chunk = |c: usize| {
        let mut acc = Partial::new(cells);
        let mut scratch = Vec::with_capacity(cells);
        let start = c * CHUNK;
        let end = (start + CHUNK).min(config.replicates);
        for id in start..end {
            if let Err(e) = run_replicate(config, prep, id as u64, &mut acc, &mut scratch) {
                acc.failures += 1;
                if acc.first_error.is_none() {
                    acc.first_error = Some(format!("replicate {id}: {e}"));
                }
            }
        }
        acc
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Domain(format!("cannot start worker pool: {e}")))?;
    let partials: Vec<Partial> = pool.install(|| (0..chunks).into_par_iter().map(run_chunk).collect());
    let mut total = Partial::new(cells);
    for p in &partials {
        total.merge(p);
    }
    Ok(total)
}

fn build_report(
    config: &ExperimentConfig,
    prep: &Prepared,
    total: Partial,
    calibration: Option<ScaleCalibration>,
) -> Result<ExperimentReport> {
    let reference = config.reference_table()?;
    let kinds = &config.estimators;
    let used = total.params[0].count;
    let rows = prep
        .grid
        .iter()
        .enumerate()
        .map(|(row, &q)| {
            let cells = kinds
                .iter()
                .enumerate()
                .map(|(j, kind)| {
                    let acc = &total.cells[row * kinds.len() + j];
                    let stat = acc.value.summary();
                    let (coverage, se_coverage, vs_ref, lo, hi) = if kind.is_hr2() && used > 0 {
                        let p = acc.covered as f64 / used as f64;
                        let vs_ref = prep.reference_exact[row]
                            .map(|_| acc.covered_reference as f64 / used as f64);
                        (
                            Some(p),
                            Some((p * (1.0 - p) / used as f64).sqrt()),
                            vs_ref,
                            Some(acc.ci_low.mean),
                            Some(acc.ci_high.mean),
                        )
                    } else {
                        (None, None, None, None, None)
                    };
                    let col = kind.reference_column();
                    let ref_row = reference.and_then(|t| t.row(q));
                    let ref_cov = reference.and_then(|t| {
                        let i = t.coverage_row(q)?;
                        match kind {
                            EstimatorKind::Hr2Mml => Some(t.coverage[i].0),
                            EstimatorKind::Hr2Ls => Some(t.coverage[i].1),
                            _ => None,
                        }
                    });
                    EstimatorCell {
                        estimator: *kind,
                        mean: stat.mean,
                        variance: stat.variance,
                        se_mean: stat.se,
                        coverage,
                        se_coverage,
                        coverage_vs_reference: vs_ref,
                        mean_ci_low: lo,
                        mean_ci_high: hi,
                        reference_mean: ref_row.map(|i| reference.unwrap().means[i][col]),
                        reference_variance: ref_row.map(|i| reference.unwrap().variances[i][col]),
                        reference_coverage: ref_cov,
                    }
                })
                .collect();
            ReportRow {
                q,
                t: config.true_loc.mu + config.true_loc.sigma * prep.deltas[row],
                delta: prep.deltas[row],
                exact: prep.exact[row],
                reference_exact: prep.reference_exact[row],
                cells,
            }
        })
        .collect();
    let coeffs = prep.mml.coefficients();
    let complete = config.observed() == config.n;
    let (m_eff, m_eff_source) = if complete {
        let plan = crate::estimators::CompleteMml::from_coefficients(
            &prep.family,
            coeffs.clone(),
            MmlOptions { sts_scale: prep.sts_scale },
        )?;
        let est = plan.fit_values(&prep.eos.values, true)?;
        (Some(est.m_eff), est.m_eff_source)
    } else {
        (None, MEffSource::LinearizedInformation)
    };
    let ls_wanted = kinds.iter().any(EstimatorKind::is_ls);
    let attempted = config.replicates as u64;
    Ok(ExperimentReport {
        config: config.clone(),
        grid: prep.grid.clone(),
        metadata: ReportMetadata {
            coefficient_variant: coeffs.variant,
            replaced_coefficients: coeffs.replaced.iter().filter(|&&x| x).count(),
            sts_scale: config.family.is_sts().then_some(prep.sts_scale),
            sts_scale_calibration: calibration,
            m_eff,
            m_eff_source,
            m_eff_formula: m_eff_source.formula().into(),
            order_stat_method: prep.eos.method,
            order_stat_precision: prep.eos.max_precision(),
            critical_value: prep.critical,
        },
        parameters: ParameterSummary {
            mml_mu: total.params[0].summary(),
            mml_sigma: total.params[1].summary(),
            ls_mu: ls_wanted.then(|| total.params[2].summary()),
            ls_sigma: ls_wanted.then(|| total.params[3].summary()),
        },
        rows,
        replicates_used: used,
        failures: total.failures,
        failure_fraction: total.failures as f64 / attempted as f64,
        first_failure: total.first_error,
    })
}

/// Mean MML `σ̂` under each STS variant, choosing the one nearest `target`.
pub fn calibrate_sts_scale(
    config: &ExperimentConfig,
    target: f64,
    workers: usize,
    cache: Option<&OrderStatCache>,
) -> Result<ScaleCalibration> {
    config.validate()?;
    if !config.family.is_sts() {
        return Err(Error::Domain("scale calibration applies to STS only".into()));
    }
    let eos = load_order_stats(&Family::new(config.family)?, config.n, cache)?;
    let mut probe = config.clone();
    probe.estimators = vec![EstimatorKind::Hr2Mml];
    probe.quantile_grid = GridSpec::Values(vec![0.5]);
    let mut sigma = [0.0; 2];
    for (slot, variant) in [StsScaleVariant::Unit, StsScaleVariant::Lambda].into_iter().enumerate() {
        let prep = prepare(&probe, vec![0.5], variant, eos.clone())?;
        sigma[slot] = simulate(&probe, &prep, workers)?.params[1].mean;
    }
    let tie = sigma[0] == sigma[1];
    let chosen = if tie || (sigma[0] - target).abs() <= (sigma[1] - target).abs() {
        StsScaleVariant::Unit
    } else {
        StsScaleVariant::Lambda
    };
    Ok(ScaleCalibration {
        target_sigma: target,
        unit_sigma_mean: sigma[0],
        lambda_sigma_mean: sigma[1],
        chosen,
        tie,
    })
}

/// Runs a study: means, variances and coverage of the selected estimators.
///
/// `workers = 0` uses all available cores. The report does not depend on
/// `workers`.
pub fn run_experiment(
    config: &ExperimentConfig,
    workers: usize,
    cache: Option<&OrderStatCache>,
) -> Result<(ExperimentReport, ExperimentTiming)> {
    let started = Instant::now();
    config.validate()?;
    let grid = config.quantile_grid.resolve(config.n)?;
    let family = Family::new(config.family)?;
    let eos = load_order_stats(&family, config.n, cache)?;
    let (sts_scale, calibration) = match (config.family.is_sts(), config.sts_scale, config.reference_table()?) {
        (true, None, Some(table)) => {
            let cal = calibrate_sts_scale(config, table.header.mml_sigma, workers, cache)?;
            (cal.chosen, Some(cal))
        }
        (_, Some(v), _) => (v, None),
        _ => (StsScaleVariant::Unit, None),
    };
    let prep = prepare(config, grid, sts_scale, eos)?;
    let total = simulate(config, &prep, workers)?;
    let report = build_report(config, &prep, total, calibration)?;
    let timing = ExperimentTiming {
        workers: if workers == 0 {
            rayon::current_num_threads()
        } else {
            workers
        },
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((report, timing))
}

/// Means and variances study (the layout of the efficiency tables).
pub fn run_table_experiment(
    config: &ExperimentConfig,
    workers: usize,
    cache: Option<&OrderStatCache>,
) -> Result<(ExperimentReport, ExperimentTiming)> {
    run_experiment(config, workers, cache)
}

/// Coverage study: restricted to the HR2 estimators, which carry intervals.
pub fn run_coverage_experiment(
    config: &ExperimentConfig,
    workers: usize,
    cache: Option<&OrderStatCache>,
) -> Result<(ExperimentReport, ExperimentTiming)> {
    let mut cfg = config.clone();
    cfg.estimators.retain(|k| k.is_hr2());
    if cfg.estimators.is_empty() {
        cfg.estimators = vec![EstimatorKind::Hr2Mml];
    }
    run_experiment(&cfg, workers, cache)
}

/// Band of the MML interval for one quantile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FigureRow {
    pub q: f64,
    pub exact: f64,
    pub mean_hr2: f64,
    pub mean_ci_low: f64,
    pub mean_ci_high: f64,
    pub coverage: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FigureData {
    pub config: ExperimentConfig,
    pub rows: Vec<FigureRow>,
}

impl FigureData {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("q,exact,mean_hr2,mean_ci_low,mean_ci_high,coverage\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.q, r.exact, r.mean_hr2, r.mean_ci_low, r.mean_ci_high, r.coverage
            )
            .unwrap();
        }
        out
    }
}

/// Mean HR2 (MML) and mean interval bounds per quantile.
pub fn emit_figure_data(
    config: &ExperimentConfig,
    workers: usize,
    cache: Option<&OrderStatCache>,
) -> Result<(FigureData, ExperimentReport, ExperimentTiming)> {
    let mut cfg = config.clone();
    cfg.estimators = vec![EstimatorKind::Hr2Mml];
    let (report, timing) = run_experiment(&cfg, workers, cache)?;
    let rows = report
        .rows
        .iter()
        .map(|row| {
            let c = row.cell(EstimatorKind::Hr2Mml).expect("HR2 MML cell");
            FigureRow {
                q: row.q,
                exact: row.exact,
                mean_hr2: c.mean,
                mean_ci_low: c.mean_ci_low.unwrap_or(f64::NAN),
                mean_ci_high: c.mean_ci_high.unwrap_or(f64::NAN),
                coverage: c.coverage.unwrap_or(f64::NAN),
            }
        })
        .collect();
    Ok((FigureData { config: cfg, rows }, report, timing))
}
