use crate::error::{Error, Result};
use crate::tensor::scalar::{gemm, Mat};
use crate::tensor::tensor::{Computed, Op, Saved};
use crate::tensor::{Real, Tensor};

/// Batched matrix product `A[b] * B[b]` (or `A[b] * B[b]^T`), rank 2 or 3.
struct MatMul {
    trans_b: bool,
}

struct Dims {
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
}

impl MatMul {
    fn dims(&self, a: &[usize], b: &[usize]) -> Result<Dims> {
        let bad = || Error::Dimension(format!("matmul of {a:?} and {b:?} (transpose_b = {})", self.trans_b));
        if a.len() != b.len() || !(a.len() == 2 || a.len() == 3) {
            return Err(bad());
        }
        let (batch, a2, b2) = if a.len() == 3 {
            if a[0] != b[0] {
                return Err(bad());
            }
            (a[0], &a[1..], &b[1..])
        } else {
            (1, a, b)
        };
        let (kb, n) = if self.trans_b { (b2[1], b2[0]) } else { (b2[0], b2[1]) };
        if a2[1] != kb {
            return Err(bad());
        }
        Ok(Dims { batch, m: a2[0], k: a2[1], n })
    }
}

impl<T: Real> Op<T> for MatMul {
    fn name(&self) -> &'static str {
        if self.trans_b {
            "matmul_t"
        } else {
            "matmul"
        }
    }

    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Computed<T>> {
        let (a, b) = (inputs[0], inputs[1]);
        let Dims { batch, m, k, n } = self.dims(a.shape(), b.shape())?;
        let mut out = vec![T::zero(); batch * m * n];
        for i in 0..batch {
            let av = &a.data()[i * m * k..(i + 1) * m * k];
            let bv = &b.data()[i * k * n..(i + 1) * k * n];
            let bm = if self.trans_b { Mat::t(bv) } else { Mat::n(bv) };
            gemm(m, k, n, Mat::n(av), bm, T::zero(), &mut out[i * m * n..(i + 1) * m * n]);
        }
        let mut shape = a.shape().to_vec();
        *shape.last_mut().unwrap() = n;
        Ok(Computed::new(shape, out))
    }

    fn backward(&self, inputs: &[&Tensor<T>], _: &Saved<T>, _: &[T], grad: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let (a, b) = (inputs[0], inputs[1]);
        let Dims { batch, m, k, n } = self.dims(a.shape(), b.shape()).expect("validated in forward");
        let mut ga = needs[0].then(|| vec![T::zero(); a.numel()]);
        let mut gb = needs[1].then(|| vec![T::zero(); b.numel()]);
        for i in 0..batch {
            let av = &a.data()[i * m * k..(i + 1) * m * k];
            let bv = &b.data()[i * k * n..(i + 1) * k * n];
            let gc = &grad[i * m * n..(i + 1) * m * n];
            if let Some(ga) = ga.as_mut() {
                let dst = &mut ga[i * m * k..(i + 1) * m * k];
                // dA = dC * op(B)^T
                let bm = if self.trans_b { Mat::n(bv) } else { Mat::t(bv) };
                gemm(m, n, k, Mat::n(gc), bm, T::zero(), dst);
            }
            if let Some(gb) = gb.as_mut() {
                let dst = &mut gb[i * k * n..(i + 1) * k * n];
                if self.trans_b {
                    // dB[n,k] = dC^T * A
                    gemm(n, m, k, Mat::t(gc), Mat::n(av), T::zero(), dst);
                } else {
                    // dB[k,n] = A^T * dC
                    gemm(k, m, n, Mat::t(av), Mat::n(gc), T::zero(), dst);
                }
            }
        }
        vec![ga, gb]
    }
}

impl<T: Real> Tensor<T> {
    /// `self * other` for rank-2 operands or batched rank-3 operands.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        Tensor::apply(MatMul { trans_b: false }, &[self, other])
    }

    /// `self * other^T` (transposing the last two axes of `other`).
    pub fn matmul_t(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        Tensor::apply(MatMul { trans_b: true }, &[self, other])
    }
}
