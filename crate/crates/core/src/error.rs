use std::fmt;

use thiserror::Error;

/// One violated configuration invariant.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ValidationError {
    pub field: String,
    pub message: String,
}

impl ValidationError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration ({} error(s)): {}", .0.len(), join(.0))]
    ConfigInvalid(Vec<ValidationError>),

    #[error("invalid bounds: lo = {lo} > hi = {hi}")]
    InvalidBounds { lo: f64, hi: f64 },

    #[error("infeasible demand {demand} MW: fleet range is [{min_output}, {max_output}] MW (shortfall {shortfall} MW)")]
    InfeasibleDemand {
        demand: f64,
        min_output: f64,
        max_output: f64,
        shortfall: f64,
    },

    #[error("offline interval {interval}: {source}")]
    BaselineInterval {
        interval: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("at t = {t} s: {source}")]
    AtTime {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("integration diverged at step {step} (t = {t} s)")]
    Diverged { step: usize, t: f64 },

    #[error("non-monotone sample time: t = {t} s after t_prev = {t_prev} s")]
    NonMonotoneTime { t: f64, t_prev: f64 },

    #[error("generator index {index} out of range for fleet of {len}")]
    InvalidGenerator { index: usize, len: usize },

    #[error("generator {index} is already out of service")]
    DoubleOutage { index: usize },

    #[error("brute-force oracle supports at most 3 generators (got {0})")]
    OracleTooLarge(usize),

    #[error("sample grids differ: {0}")]
    MismatchedTimebase(String),

    #[error("config parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn join(errs: &[ValidationError]) -> String {
    errs.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    /// The innermost error, skipping interval and timestamp tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::BaselineInterval { source, .. } | Error::AtTime { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
