//! Error type shared by the numeric core.

use alloc::string::String;
use core::fmt;

/// Errors raised by the numeric core.
///
/// Domain and overflow errors carry the index of the tape node whose
/// evaluation failed so callers can report *where* a computation left the
/// valid domain instead of silently propagating NaN.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Operand shapes are incompatible for the requested operation.
    ShapeMismatch {
        op: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    /// A function was evaluated outside its domain (e.g. `ln` of a
    /// non-positive value) at the given tape node.
    Domain { op: &'static str, node: usize },
    /// `exp` overflowed to infinity at the given tape node.
    Overflow { op: &'static str, node: usize },
    /// A non-finite value (NaN or ±inf) appeared where a finite one is
    /// required.
    NonFinite { what: &'static str },
    /// A linear solve failed (singular or numerically unusable matrix).
    Singular { what: &'static str },
    /// A configuration value is invalid.
    InvalidConfig { what: String },
    /// An iterative routine diverged (NaN/inf in its state).
    Diverged { what: &'static str, step: usize },
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::ShapeMismatch { op, expected, got } => write!(
                f,
                "shape mismatch in {op}: expected {}x{}, got {}x{}",
                expected.0, expected.1, got.0, got.1
            ),
            CoreError::Domain { op, node } => {
                write!(f, "domain error in {op} at tape node {node}")
            }
            CoreError::Overflow { op, node } => {
                write!(f, "overflow in {op} at tape node {node}")
            }
            CoreError::NonFinite { what } => write!(f, "non-finite value in {what}"),
            CoreError::Singular { what } => write!(f, "singular linear system in {what}"),
            CoreError::InvalidConfig { what } => write!(f, "invalid configuration: {what}"),
            CoreError::Diverged { what, step } => {
                write!(f, "{what} diverged at step {step}")
            }
        }
    }
}

impl core::error::Error for CoreError {}
