//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 estimation failure,
//! 4 too many failed Monte Carlo replicates.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    ls_estimate, mml_estimate, EstimationMethod, MmlOptions, ObservedSample, ParamEstimate,
    StsScaleVariant,
};
use crate::families::{Family, FamilySpec};
use crate::hazard::{bracket, estimate_hazard, HazardResult, HazardTable};
use crate::montecarlo::{emit_figure_data, run_experiment, ExperimentConfig};
use crate::order_stats::{
    expected_order_stats, ExpectedOrderStats, OrderStatCache, OrderStatMethod, OrderStatOptions,
    CACHE_DIR_ENV,
};
use crate::predict::{predict_all, PredictedOrderStats, PredictorMethod};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ESTIMATION: i32 = 3;
pub const EXIT_REPLICATES: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "lshazard", version, about = "Hazard rate estimation for STS and LTS location-scale families")]
pub struct Cli {
    /// Directory for cached expected order statistics.
    #[arg(long, global = true, env = CACHE_DIR_ENV)]
    pub cache_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute and cache expected order statistics.
    Tables(TablesArgs),
    /// Fit location and scale by LS and MML.
    Estimate(EstimateArgs),
    /// Estimate the hazard rate at a time point.
    Hazard(HazardArgs),
    /// Predict the censored order statistics.
    Predict(PredictArgs),
    /// Run a Monte Carlo study.
    Simulate(ExperimentArgs),
    /// Emit interval-band data for plotting.
    Figure(ExperimentArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FamilyKind {
    Sts,
    Lts,
}

#[derive(Debug, Args)]
pub struct FamilyArgs {
    #[arg(long, value_enum)]
    pub family: FamilyKind,
    /// STS integer parameter r.
    #[arg(long)]
    pub r: Option<u32>,
    /// STS shape parameter d (< r).
    #[arg(long, allow_negative_numbers = true)]
    pub d: Option<f64>,
    /// LTS shape parameter p (>= 2).
    #[arg(long)]
    pub p: Option<f64>,
}

impl FamilyArgs {
    pub fn spec(&self) -> Result<FamilySpec> {
        let spec = match self.family {
            FamilyKind::Sts => {
                if self.p.is_some() {
                    return Err(Error::Parse("--p applies to --family lts only".into()));
                }
                match (self.r, self.d) {
                    (Some(r), Some(d)) => FamilySpec::sts(r, d),
                    _ => return Err(Error::Parse("--family sts needs --r and --d".into())),
                }
            }
            FamilyKind::Lts => {
                if self.r.is_some() || self.d.is_some() {
                    return Err(Error::Parse("--r and --d apply to --family sts only".into()));
                }
                FamilySpec::lts(
                    self.p
                        .ok_or_else(|| Error::Parse("--family lts needs --p".into()))?,
                )
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Args)]
pub struct TablesArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    /// Sample sizes (repeatable).
    #[arg(long = "n", required = true, num_args = 1..)]
    pub n: Vec<usize>,
    #[arg(long, value_enum, default_value = "quadrature")]
    pub method: MethodArg,
    /// Seed for the Monte Carlo method (derived from the table key by default).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Unit,
    Lambda,
}

impl From<ScaleArg> for StsScaleVariant {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Unit => StsScaleVariant::Unit,
            ScaleArg::Lambda => StsScaleVariant::Lambda,
        }
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    /// Sample file: one value per line, optional `#censored n=<N>` first line.
    #[arg(long)]
    pub input: PathBuf,
    /// Print full-precision JSON instead of a table.
    #[arg(long)]
    pub json: bool,
    #[arg(long, value_enum, default_value = "unit")]
    pub sts_scale: ScaleArg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum HazardMethodArg {
    Mml,
    Ls,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PredictorArg {
    Mml,
    Spacings,
}

impl From<PredictorArg> for PredictorMethod {
    fn from(p: PredictorArg) -> Self {
        match p {
            PredictorArg::Mml => PredictorMethod::PredictiveMml,
            PredictorArg::Spacings => PredictorMethod::Spacings,
        }
    }
}

#[derive(Debug, Args)]
pub struct HazardArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long)]
    pub input: PathBuf,
    /// Time point.
    #[arg(long, allow_negative_numbers = true)]
    pub t: f64,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, value_enum, default_value = "both")]
    pub method: HazardMethodArg,
    /// Use estimates from `estimate --json` instead of refitting.
    #[arg(long)]
    pub estimate: Option<PathBuf>,
    /// Predictor for censored samples.
    #[arg(long, value_enum, default_value = "mml")]
    pub predictor: PredictorArg,
    /// Allow t outside the range of the (completed) sample.
    #[arg(long)]
    pub extrapolate: bool,
    #[arg(long)]
    pub json: bool,
    #[arg(long, value_enum, default_value = "unit")]
    pub sts_scale: ScaleArg,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "mml")]
    pub predictor: PredictorArg,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "unit")]
    pub sts_scale: ScaleArg,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// JSON experiment configuration.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in configuration: table1..table4, figure1, figure2.
    #[arg(long)]
    pub preset: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "report")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

impl ExperimentArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::from_file(path)?,
            (None, Some(name)) => ExperimentConfig::preset(name)?,
            (None, None) => return Err(Error::Parse("--config or --preset is required".into())),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(reps) = self.replicates {
            cfg.replicates = reps;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::EstimationFailure(_)
        | Error::DegenerateSample
        | Error::InsufficientData { .. }
        | Error::HazardSaturated { .. }
        | Error::Quadrature(_)
        | Error::RootFinding(_) => EXIT_ESTIMATION,
        Error::ExcessiveFailures { .. } => EXIT_REPLICATES,
        _ => EXIT_USAGE,
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let mut out = String::new();
    let result = dispatch(&cli, &mut out);
    print!("{out}");
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs a parsed command, appending its standard output to `out`.
pub fn dispatch(cli: &Cli, out: &mut String) -> Result<()> {
    let cache = cli.cache_dir.as_ref().map(OrderStatCache::new);
    match &cli.command {
        Command::Tables(a) => tables(a, cache.as_ref(), out),
        Command::Estimate(a) => estimate(a, cache.as_ref(), out),
        Command::Hazard(a) => hazard(a, cache.as_ref(), out),
        Command::Predict(a) => predict(a, cache.as_ref(), out),
        Command::Simulate(a) => simulate(a, cache.as_ref(), out),
        Command::Figure(a) => figure(a, cache.as_ref(), out),
    }
}

fn order_stats(
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

fn tables(a: &TablesArgs, cache: Option<&OrderStatCache>, out: &mut String) -> Result<()> {
    let cache = cache.ok_or_else(|| {
        Error::Parse(format!("tables needs --cache-dir or ${CACHE_DIR_ENV}"))
    })?;
    let family = Family::new(a.family.spec()?)?;
    let method = match a.method {
        MethodArg::Quadrature => OrderStatMethod::Quadrature,
        MethodArg::MonteCarlo => OrderStatMethod::MonteCarlo,
    };
    let opts = OrderStatOptions {
        seed: a.seed,
        ..OrderStatOptions::default()
    };
    for &n in &a.n {
        let (table, outcome) = cache.get_or_compute(&family, n, method, &opts)?;
        writeln!(
            out,
            "{} n={} {:?} computed_by={:?} precision={:e} -> {}",
            family.spec().label(),
            n,
            outcome,
            table.method,
            table.max_precision(),
            cache.path_for(&family.spec(), n).display()
        )
        .unwrap();
    }
    Ok(())
}

/// Both fits of one sample; LS is absent for censored samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateOutput {
    pub ls: Option<ParamEstimate<f64>>,
    pub mml: ParamEstimate<f64>,
}

fn fit_all(
    sample: &ObservedSample<f64>,
    family: &Family<f64>,
    eos: &ExpectedOrderStats<f64>,
    scale: StsScaleVariant,
) -> Result<EstimateOutput> {
    let mml = mml_estimate(sample, family, eos, &MmlOptions { sts_scale: scale })?;
    let ls = if sample.is_complete() {
        Some(ls_estimate(sample, family)?)
    } else {
        None
    };
    Ok(EstimateOutput { ls, mml })
}

fn estimate(a: &EstimateArgs, cache: Option<&OrderStatCache>, out: &mut String) -> Result<()> {
    let family = Family::new(a.family.spec()?)?;
    let sample = ObservedSample::from_file(&a.input)?;
    let eos = order_stats(&family, sample.n(), cache)?;
    let fits = fit_all(&sample, &family, &eos, a.sts_scale.into())?;
    if a.json {
        out.push_str(&serde_json::to_string_pretty(&fits)?);
        out.push('\n');
        return Ok(());
    }
    writeln!(out, "family {}  n={}  r={}", family.spec(), sample.n(), sample.r()).unwrap();
    writeln!(out, "method  mu_hat  sigma_hat  m_eff").unwrap();
    for est in fits.ls.iter().chain(std::iter::once(&fits.mml)) {
        writeln!(
            out,
            "{}  {:.6}  {:.6}  {:.6}",
            est.method, est.mu_hat, est.sigma_hat, est.m_eff
        )
        .unwrap();
    }
    if fits.ls.is_none() {
        writeln!(out, "LS skipped: sample is censored").unwrap();
    }
    Ok(())
}

fn load_estimates(path: &Path) -> Result<EstimateOutput> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// The sample completed with predictions when censored.
fn bracket_source(
    sample: &ObservedSample<f64>,
    family: &Family<f64>,
    eos: &ExpectedOrderStats<f64>,
    mml: &ParamEstimate<f64>,
    predictor: PredictorMethod,
) -> Result<(Vec<f64>, Option<PredictedOrderStats<f64>>)> {
    if sample.is_complete() {
        return Ok((sample.values().to_vec(), None));
    }
    let predicted = predict_all(sample, family, eos, mml, predictor)?;
    Ok((predicted.combined(sample), Some(predicted)))
}

/// Hazard results for the requested methods.
pub fn hazard_results(
    sample: &ObservedSample<f64>,
    family: &Family<f64>,
    eos: &ExpectedOrderStats<f64>,
    fits: &EstimateOutput,
    t: f64,
    level: f64,
    methods: &[EstimationMethod],
    predictor: PredictorMethod,
    extrapolate: bool,
) -> Result<Vec<HazardResult<f64>>> {
    let (values, _) = bracket_source(sample, family, eos, &fits.mml, predictor)?;
    let b = bracket(&values, t)?;
    if b.extrapolated && !extrapolate {
        return Err(Error::Domain(format!(
            "t = {t} lies outside [{}, {}); pass --extrapolate to use the terminal bracket",
            values[0],
            values[values.len() - 1]
        )));
    }
    let lin = HazardTable::new(family, eos)?.linearize_bracket(b)?;
    methods
        .iter()
        .map(|m| {
            let est = match m {
                EstimationMethod::Mml => &fits.mml,
                EstimationMethod::Ls => fits.ls.as_ref().ok_or_else(|| {
                    Error::Domain("least squares needs a complete sample".into())
                })?,
            };
            estimate_hazard(est, family, &lin, t, level)
        })
        .collect()
}

fn hazard(a: &HazardArgs, cache: Option<&OrderStatCache>, out: &mut String) -> Result<()> {
    let family = Family::new(a.family.spec()?)?;
    let sample = ObservedSample::from_file(&a.input)?;
    let eos = order_stats(&family, sample.n(), cache)?;
    let fits = match &a.estimate {
        Some(path) => {
            let fits = load_estimates(path)?;
            if fits.mml.family != family.spec() || fits.mml.n != sample.n() {
                return Err(Error::Domain(format!(
                    "{} holds estimates for {} with n = {}",
                    path.display(),
                    fits.mml.family,
                    fits.mml.n
                )));
            }
            fits
        }
        None => fit_all(&sample, &family, &eos, a.sts_scale.into())?,
    };
    let methods: Vec<EstimationMethod> = match a.method {
        HazardMethodArg::Mml => vec![EstimationMethod::Mml],
        HazardMethodArg::Ls => vec![EstimationMethod::Ls],
        HazardMethodArg::Both if sample.is_complete() => {
            vec![EstimationMethod::Mml, EstimationMethod::Ls]
        }
        HazardMethodArg::Both => vec![EstimationMethod::Mml],
    };
    let results = hazard_results(
        &sample,
        &family,
        &eos,
        &fits,
        a.t,
        a.level,
        &methods,
        a.predictor.into(),
        a.extrapolate,
    )?;
    if a.json {
        out.push_str(&serde_json::to_string_pretty(&results)?);
        out.push('\n');
        return Ok(());
    }
    writeln!(out, "family {}  n={}  r={}  t={:.6}  level={:.6}", family.spec(), sample.n(), sample.r(), a.t, a.level).unwrap();
    writeln!(out, "method  k  delta_hat  hr1  hr2  ci_low  ci_high  hr2_data  ci_low_data  ci_high_data  flags").unwrap();
    for r in &results {
        let d = r.data_scale();
        let hr1 = r.hr1.map(|v| format!("{v:.6}")).unwrap_or_else(|| "saturated".into());
        let flags = r.flags.names();
        writeln!(
            out,
            "{}  {}  {:.6}  {}  {:.6}  {:.6}  {:.6}  {:.6}  {:.6}  {:.6}  {}",
            r.method,
            r.k,
            r.delta_hat,
            hr1,
            r.hr2,
            r.ci_low,
            r.ci_high,
            d.hr2,
            d.ci_low,
            d.ci_high,
            if flags.is_empty() { "-".to_string() } else { flags.join(",") }
        )
        .unwrap();
    }
    Ok(())
}

fn predict(a: &PredictArgs, cache: Option<&OrderStatCache>, out: &mut String) -> Result<()> {
    let family = Family::new(a.family.spec()?)?;
    let sample = ObservedSample::from_file(&a.input)?;
    if sample.is_complete() {
        return Err(Error::Domain(
            "the sample is complete; add a `#censored n=<N>` line to predict".into(),
        ));
    }
    let eos = order_stats(&family, sample.n(), cache)?;
    let mml = mml_estimate(&sample, &family, &eos, &MmlOptions { sts_scale: a.sts_scale.into() })?;
    let predicted = predict_all(&sample, &family, &eos, &mml, a.predictor.into())?;
    let mut csv = String::from("i,x_hat,method\n");
    for (i, x) in predicted.indices.iter().zip(&predicted.values) {
        writeln!(csv, "{i},{x:.6},{}", predicted.method).unwrap();
    }
    if predicted.repaired {
        log::warn!("predictions were made monotone by a running maximum");
    }
    match &a.out {
        Some(path) => {
            std::fs::write(path, csv).map_err(|e| Error::io(path, e))?;
            writeln!(out, "wrote {}", path.display()).unwrap();
        }
        None => out.push_str(&csv),
    }
    Ok(())
}

fn simulate(a: &ExperimentArgs, cache: Option<&OrderStatCache>, out: &mut String) -> Result<()> {
    let cfg = a.config()?;
    info!("running {} replicates of {} with n = {}", cfg.replicates, cfg.family, cfg.n);
    let (report, timing) = run_experiment(&cfg, a.workers, cache)?;
    for path in report.write(&a.out, Some(&timing))? {
        writeln!(out, "wrote {}", path.display()).unwrap();
    }
    writeln!(
        out,
        "replicates used {} of {}, failures {}  ({:.1} s)",
        report.replicates_used, cfg.replicates, report.failures, timing.wall_seconds
    )
    .unwrap();
    writeln!(out, "q  exact  estimator  mean  variance  coverage").unwrap();
    for row in &report.rows {
        for c in &row.cells {
            writeln!(
                out,
                "{:.6}  {:.6}  {}  {:.6}  {:.6}  {}",
                row.q,
                row.exact,
                c.estimator.name(),
                c.mean,
                c.variance,
                c.coverage.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into())
            )
            .unwrap();
        }
    }
    report.check_failures()
}

fn figure(a: &ExperimentArgs, cache: Option<&OrderStatCache>, out: &mut String) -> Result<()> {
    let cfg = a.config()?;
    let (fig, report, timing) = emit_figure_data(&cfg, a.workers, cache)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let path = a.out.join("figure.csv");
    std::fs::write(&path, fig.to_csv()).map_err(|e| Error::io(&path, e))?;
    writeln!(out, "wrote {}", path.display()).unwrap();
    for p in report.write(&a.out, Some(&timing))? {
        writeln!(out, "wrote {}", p.display()).unwrap();
    }
    report.check_failures()
}
