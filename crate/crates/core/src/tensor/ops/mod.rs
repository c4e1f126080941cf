//! Differentiable operations. Each op is a small struct implementing
//! [`Op`](super::tensor::Op); the public API is exposed as `Tensor` methods.

mod activation;
mod attention;
mod conv;
mod dropout;
mod elementwise;
mod linear;
mod loss;
mod matmul;
mod norm;
mod pool;
mod shape;

pub use attention::{multi_head_attention, AttentionWeights};
pub use conv::conv_output_size;
pub use linear::linear_param_count;

use super::Real;

pub(crate) fn add_into<T: Real>(acc: &mut [T], v: &[T]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a = *a + *b;
    }
}
