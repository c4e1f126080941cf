//! Tensors with reverse-mode automatic differentiation.

pub mod ops;
mod resize;
mod rng;
mod scalar;
#[allow(clippy::module_inception)]
mod tensor;

pub use resize::resize_bilinear;
pub use rng::{mix_seed, Rng};
pub use scalar::Real;
pub use tensor::{grad_enabled, no_grad, NoGradGuard, Tensor};
pub(crate) use tensor::{Computed, Op, Saved};
