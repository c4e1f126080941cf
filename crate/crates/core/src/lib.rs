//! Osteosarcoma histopathology classifiers built on a small reverse-mode
//! autodiff engine.
//!
//! The crate is organised as:
//!
//! - [`tensor`]: n-dimensional tensors, the operation graph and `backward()`.
//! - [`models`]: CNN, ViT, ResNet-50 and the CNN+ViT fusion model, plus the
//!   `OSHX` checkpoint format.
//! - [`data`]: directory loading, decoding, stratified splits, class weights,
//!   normalisation, batching and a synthetic dataset generator.
//! - [`train`]: weighted cross-entropy, Adam and the epoch loop.
//! - [`eval`]: confusion matrices, metrics, result tables and charts.
//! - [`gradcheck`]: finite-difference verification of every differentiable op.

pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod models;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Real, Rng, Tensor};
