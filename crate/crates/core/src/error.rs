use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is rank deficient: sigma_min = {sigma_min:e}, sigma_max = {sigma_max:e} ({context})")]
    RankDeficient {
        sigma_min: f64,
        sigma_max: f64,
        context: String,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("invalid spectrum: condition number target {0} < 1")]
    InvalidSpectrum(f64),

    #[error("insufficient samples for splitting: need n >= {required}, have {available}")]
    InsufficientSamples { required: usize, available: usize },

    #[error("graph still disconnected after {0} retries")]
    DisconnectedAfterRetries(usize),

    #[error("nonpositive step-size estimate (max diag of R = {0:e})")]
    NonpositiveEstimate(f64),

    #[error("invalid value for `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("missing columns in {path}: {columns:?}")]
    MissingColumns { path: PathBuf, columns: Vec<String> },

    #[error("nothing to plot: {0}")]
    EmptySeries(String),

    #[error("malformed dataset file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Whether the error stems from user input (bad config, bad arguments)
    /// rather than from a failed computation or I/O.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig { .. }
                | Error::ConfigParse(_)
                | Error::InvalidSpectrum(_)
                | Error::InsufficientSamples { .. }
                | Error::MissingColumns { .. }
                | Error::EmptySeries(_)
        )
    }
}
