//! Minimal reverse-mode differentiation: the primitives the operator's
//! forward pass needs, Adam, and a finite-difference checker.

mod adam;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use params::{BoundParams, ParamId, ParamStore};
pub use tape::{Tape, Value, L2_EPS, LAYER_NORM_EPS};
pub use tensor::Tensor;
