use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the estimation and detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric input was outside the domain of the operation (NaN, inf, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Shapes or settings that do not fit together.
    #[error("configuration error: {0}")]
    Config(String),

    /// A configuration value violated one of its invariants.
    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("simulation error: {0}")]
    Simulation(String),

    /// The observer produced a non-finite or runaway state.
    #[error("estimator diverged at t = {t} s: {reason}")]
    Divergence { t: f64, reason: String },

    /// Input streams that must be time-ordered were not.
    #[error("input error: {0}")]
    Input(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("line {line}: time does not increase ({t} after {prev})")]
    Ordering { line: u64, t: f64, prev: f64 },

    #[error("unsupported region: {0}")]
    UnsupportedRegion(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
