//! The `oilsense` pipeline: generate a sweep dataset, train the four
//! classifiers, evaluate them, or run all three in one go.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use oilsense_core::ErrorCategory;

pub use commands::{cmd_evaluate, cmd_generate, cmd_reproduce, cmd_train};
pub use config::{FeatureMode, RunConfig};

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_SCHEMA: i32 = 4;
pub const EXIT_NUMERIC: i32 = 5;
pub const EXIT_IO: i32 = 6;
pub const EXIT_HASH_MISMATCH: i32 = 7;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{artifact} was produced by configuration {found}, not {expected}; rerun it or pass --force")]
    HashMismatch {
        artifact: PathBuf,
        found: String,
        expected: String,
    },
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: oilsense_core::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::HashMismatch { .. } => EXIT_HASH_MISMATCH,
            CliError::Core { source, .. } => match source.category() {
                // parameter validation failures trace back to the configuration
                ErrorCategory::Domain => EXIT_CONFIG,
                ErrorCategory::Schema => EXIT_SCHEMA,
                ErrorCategory::Numeric => EXIT_NUMERIC,
                ErrorCategory::Io => EXIT_IO,
            },
        }
    }
}

/// Attach a context string to core errors.
pub(crate) trait Context<T> {
    fn context(self, what: impl Into<String>) -> Result<T, CliError>;
}

impl<T> Context<T> for oilsense_core::Result<T> {
    fn context(self, what: impl Into<String>) -> Result<T, CliError> {
        self.map_err(|source| CliError::Core { context: what.into(), source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct() {
        let core = |e| CliError::Core { context: "x".into(), source: e };
        let codes = [
            CliError::Usage(String::new()).exit_code(),
            CliError::Config(String::new()).exit_code(),
            core(oilsense_core::Error::Schema(String::new())).exit_code(),
            core(oilsense_core::Error::DipCount(1)).exit_code(),
            core(oilsense_core::Error::Serialization(String::new())).exit_code(),
            CliError::HashMismatch { artifact: PathBuf::new(), found: String::new(), expected: String::new() }.exit_code(),
        ];
        let mut unique = codes.to_vec();
        unique.sort_unstable();
        unique.dedup();
        assert_eq!(unique.len(), codes.len());
        assert!(codes.iter().all(|&c| c != 0));
    }
}
