//! Minimal dense-tensor library with tape-based reverse-mode automatic
//! differentiation and an Adam optimizer.
//!
//! Everything is 64-bit and single-threaded per tape: one training run owns
//! one [`Tape`], independent runs share nothing mutable.

mod adam;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use tape::{Tape, TensorId};
pub use tensor::Tensor;

use std::fmt;

/// Errors raised by tensor operations and the optimizer.
#[derive(Debug, Clone, PartialEq)]
pub enum NumericsError {
    /// Operand shapes are incompatible for the named operation.
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    /// A segment or row index points outside the tensor.
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    /// A stated precondition was violated.
    Contract { op: &'static str, msg: String },
}

impl fmt::Display for NumericsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NumericsError::ShapeMismatch { op, left, right } => {
                write!(f, "{op}: shape mismatch between {left:?} and {right:?}")
            }
            NumericsError::IndexOutOfRange { op, index, len } => {
                write!(f, "{op}: index {index} out of range for length {len}")
            }
            NumericsError::Contract { op, msg } => write!(f, "{op}: {msg}"),
        }
    }
}

impl std::error::Error for NumericsError {}
