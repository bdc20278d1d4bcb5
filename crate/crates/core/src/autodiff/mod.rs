//! Minimal reverse-mode autodiff engine: dense `f64` tensors, a recording
//! tape, named parameters with AdamW, and a finite-difference checker.

mod gradcheck;
mod optim;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, relative_error, GradCheckReport, REL_ERROR_FLOOR};
pub use optim::{AdamW, Bound, ParamId, ParamStore, Parameter};
pub use tape::{selu, sigmoid, softmax_in_place, Tape, Var, SELU_ALPHA, SELU_LAMBDA};
pub use tensor::Tensor;
