//! Reverse-mode differentiation over small dense arrays, plus Adam.
//!
//! A [`Tape`] is built fresh for every evaluation: each recorded op computes
//! its value immediately and remembers its parents, which always precede it.
//! [`Tape::backward`] then walks the record once in reverse.

mod adam;
mod array;
mod gradcheck;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use array::RealArray;
pub use gradcheck::grad_check;
pub use tape::{Activation, Gradients, Tape, Var};

#[derive(Debug, thiserror::Error)]
pub enum DiffError {
    #[error("shape mismatch at node {node} ({op}): {detail}")]
    ShapeMismatch { node: usize, op: &'static str, detail: String },
    #[error("non-finite value produced at node {node} ({op})")]
    NonFinite { node: usize, op: &'static str },
    #[error("backward needs a scalar output; node {node} has shape {shape:?}")]
    NonScalarOutput { node: usize, shape: Vec<usize> },
    #[error("no input or parameter named `{0}` on this tape")]
    UnboundInput(String),
    #[error("invalid array: {0}")]
    InvalidArray(String),
    #[error("contract violation: {0}")]
    Contract(String),
}
