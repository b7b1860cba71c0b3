//! File formats, experiment harness, and command-line drivers around
//! [`gebm_core`].
//!
//! The split keeps the numeric core free of I/O: everything here may touch
//! the file system, the environment, and the wall clock. Outputs are laid
//! out as `out/<spec>/<seed>/` with a `config-echo.json` in every run
//! directory; re-running any command from its echo reproduces the output
//! files byte for byte.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod formats;

pub use error::LabError;
