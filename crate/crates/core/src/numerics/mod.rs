//! Dense `f64` matrices with a reverse-mode tape.
//!
//! Everything the routing networks and their losses need: matmul, elementwise
//! arithmetic, row softmax, layer norm, activations, fused scaled dot-product
//! attention, embedding lookup, cross-entropy and BCE, reductions. Every op
//! has a backward rule, and [`grad_check`] compares those rules against
//! central differences.

mod gradcheck;
mod optim;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, GRAD_CHECK_FLOOR};
pub use optim::{Adam, AdamState};
pub use params::{Bound, ParamStore};
pub use tape::{softmax_rows, Grads, Tape, Var, LAYER_NORM_EPS};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericsError {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: [usize; 2],
        rhs: [usize; 2],
    },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: [usize; 2], len: usize },
    #[error("rows of unequal length")]
    RaggedRows,
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("{op}: index {index} out of bounds ({bound})")]
    Index {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("{op}: empty input")]
    Empty { op: &'static str },
    #[error("backward needs a 1x1 loss, got {shape:?}")]
    NonScalarLoss { shape: [usize; 2] },
    #[error("finite-difference step {0} outside [1e-6, 1e-3]")]
    InvalidStep(f64),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
}

impl NumericsError {
    pub(crate) fn shape(op: &'static str, lhs: [usize; 2], rhs: [usize; 2]) -> Self {
        Self::Shape { op, lhs, rhs }
    }
}
