//! Hazard rate estimation for short-tailed (STS) and long-tailed (LTS)
//! symmetric location-scale families.
//!
//! The hazard `h = f/(1 - F)` at a time point is estimated either by plugging
//! location-scale estimates into the exact hazard (HR¹) or by a secant of the
//! hazard between the expected order statistics bracketing the standardized
//! time point (HR²). Location and scale come from least squares or modified
//! maximum likelihood (MML), for complete or Type-II right-censored samples.
//!
//! The numerical core is generic over [`Real`] (`f32`/`f64`); the Monte Carlo
//! harness, cache and CLI work in `f64`.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod families;
pub mod hazard;
pub mod montecarlo;
pub mod order_stats;
pub mod predict;
pub mod quadrature;
pub mod reference;
pub mod rng;
pub mod roots;
pub mod scalar;
pub mod special;

pub use error::{Error, Result};
pub use estimators::{
    ls_estimate, mml_coefficients, mml_estimate, mml_estimate_censored, mml_estimate_complete,
    CensoredMml, CompleteMml, EstimationMethod, MmlCoefficients, MmlOptions, ObservedSample,
    ParamEstimate,
};
pub use hazard::{
    bracket, estimate_hazard, linearize_hazard, HazardFlags, HazardLinearization, HazardResult,
    HazardTable,
};
pub use montecarlo::{
    emit_figure_data, run_coverage_experiment, run_experiment, run_table_experiment,
    EstimatorKind, ExperimentConfig, ExperimentReport, FigureData,
};
pub use families::{Family, FamilySpec, LocScale, LocationScaleFamily};
pub use order_stats::{expected_order_stats, ExpectedOrderStats, OrderStatCache, OrderStatMethod};
pub use predict::{
    predict_all, predict_order_stat_mml, predict_order_stat_spacings, PredictedOrderStats,
    PredictorMethod,
};
pub use scalar::Real;

pub type Family64 = Family<f64>;
pub type ExpectedOrderStats64 = ExpectedOrderStats<f64>;
pub type ObservedSample64 = ObservedSample<f64>;
pub type ParamEstimate64 = ParamEstimate<f64>;
