//! Model families: MLPs, Gaussian priors, Real NVP flows, energies, and the
//! base models (prior + generator) they compose into.
//!
//! Every model follows the same two-path convention:
//!
//! * a plain `f64` path (`forward`, `eval`, `sample`, …) used when only
//!   values are needed — sampling, metrics, validation;
//! * a tape path (`tape_*`) that records the identical arithmetic on a
//!   [`crate::tape::Tape`] for reverse-mode gradients.
//!
//! Parameters are never stored inside the tape paths; they are bound by the
//! caller (trainably or frozen), which is what lets one model serve as both
//! the optimization target and a fixed critic in alternating training.

mod base;
mod energy;
mod flow;
mod mlp;
mod prior;

pub use base::{BaseModel, Generator};
pub use energy::Energy;
pub use flow::{RealNvpFlow, RealNvpSpec};
pub use mlp::{Activation, Mlp, MlpSpec};
pub use prior::GaussianPrior;
