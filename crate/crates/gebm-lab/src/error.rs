//! Error type for the lab crate with a fixed exit-code contract:
//! `1` for configuration/parse/usage errors, `2` for numerical divergence,
//! `3` for failed benchmark assertions.

use gebm_core::CoreError;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    CsvParse {
        path: PathBuf,
        /// 1-based line number of the offending row.
        line: usize,
        message: String,
    },
    #[error("invalid config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("bad checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("unknown experiment '{name}'; registered: {registered}")]
    UnknownSpec { name: String, registered: String },
    #[error("numerical divergence: {0}")]
    Diverged(CoreError),
    #[error("invalid run: {0}")]
    Core(CoreError),
    #[error("criterion failed: {0}")]
    BenchAssertion(String),
}

impl LabError {
    /// Maps each error class to the process exit code of the CLI contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Io { .. }
            | LabError::CsvParse { .. }
            | LabError::Config { .. }
            | LabError::Checkpoint { .. }
            | LabError::UnknownSpec { .. }
            | LabError::Core(_) => 1,
            LabError::Diverged(_) => 2,
            LabError::BenchAssertion(_) => 3,
        }
    }

    /// Wraps a core error, routing divergence/NaN failures to exit code 2
    /// and everything else (bad shapes, bad configs) to exit code 1.
    pub fn from_core(e: CoreError) -> Self {
        match e {
            CoreError::Diverged { .. } | CoreError::NonFinite { .. } | CoreError::Overflow { .. } => {
                LabError::Diverged(e)
            }
            other => LabError::Core(other),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }
}
