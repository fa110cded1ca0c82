use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("degenerate sample: all observations are equal")]
    DegenerateSample,
    #[error("estimation failed: {0}")]
    EstimationFailure(String),
    #[error("hazard saturated at z = {z}: survival probability below {floor:e}")]
    HazardSaturated { z: f64, floor: f64 },
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("root finding failed: {0}")]
    RootFinding(String),
    #[error("index {index} out of range: {reason}")]
    Index { index: usize, reason: String },
    #[error("malformed input: {0}")]
    Parse(String),
    #[error("cache file {path}: {reason}")]
    Cache { path: PathBuf, reason: String },
    #[error("{fraction:.4} of replicates failed (limit {limit})")]
    ExcessiveFailures { fraction: f64, limit: f64 },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
