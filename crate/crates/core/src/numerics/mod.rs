//! Dense tensors and a define-by-run gradient tape.
//!
//! Every differentiable operation used by the encoder and the classifier
//! heads is recorded on a [`GradTape`]. Values are stored as `f64` so that
//! central finite differences remain a meaningful oracle for the analytic
//! gradients.

mod tape;
mod tensor;

pub use tape::{log_softmax, softmax, GradTape, Gradients, Var, LAYER_NORM_EPS};
pub(crate) use tape::{sigmoid, smoothed_targets};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {shape:?} does not match {len} values")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("invalid shape {shape:?}")]
    InvalidShape { shape: Vec<usize> },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("expected a scalar, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("gradient tape already consumed; run a new forward pass")]
    StaleTape,
    #[error("probability {0} outside [0, 1)")]
    InvalidRate(f64),
    #[error("class index {target} out of range for {classes} classes")]
    InvalidClass { target: usize, classes: usize },
    #[error("{op}: empty input")]
    EmptyInput { op: &'static str },
}
