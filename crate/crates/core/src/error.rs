use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the simulate/train/evaluate pipeline.
///
/// The variants are grouped so that callers (the CLI in particular) can map
/// them onto a small set of failure categories, see [`Error::category`].
#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A file or table did not have the expected layout.
    #[error("schema error: {0}")]
    Schema(String),

    #[error("malformed row at line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("fixed-point iteration did not converge after {iterations} steps (last change {last_step_hz:.3} Hz)")]
    NoConvergence { iterations: usize, last_step_hz: f64 },

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("standardization undefined: feature `{0}` has zero variance in the training split")]
    ZeroVariance(String),

    #[error("expected exactly two dips deeper than the prominence threshold, found {0}")]
    DipCount(usize),

    #[error("dip near {frequency_hz:.0} Hz runs into the edge of the sweep band")]
    BandEdge { frequency_hz: f64 },

    #[error("model file version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialization(String),
}

/// Coarse failure category, stable across variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Domain,
    Schema,
    Numeric,
    Io,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Domain(_) => ErrorCategory::Domain,
            Error::Schema(_) | Error::MalformedRow { .. } | Error::Version { .. } => {
                ErrorCategory::Schema
            }
            Error::NoConvergence { .. }
            | Error::Divergence { .. }
            | Error::ZeroVariance(_)
            | Error::DipCount(_)
            | Error::BandEdge { .. } => ErrorCategory::Numeric,
            Error::Io { .. } | Error::Serialization(_) => ErrorCategory::Io,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! domain {
    ($($arg:tt)*) => {
        $crate::error::Error::Domain(format!($($arg)*))
    };
}
pub(crate) use domain;
