use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;
use rayon::prelude::*;

/// Floating-point element type of a tensor. Implemented for `f32` (the
/// default training precision) and `f64` (gradient checking).
pub trait Real:
    Float + Debug + Display + Default + Sum + Send + Sync + 'static
{
    const NAME: &'static str;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn erf(self) -> Self;

    /// Raw strided GEMM: `C = alpha * A * B + beta * C`.
    ///
    /// # Safety
    /// Pointers and strides must describe valid, non-aliasing matrices of
    /// the stated dimensions.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Real for f32 {
    const NAME: &'static str = "f32";

    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn erf(self) -> Self {
        libm::erff(self)
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    const NAME: &'static str = "f64";

    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn erf(self) -> Self {
        libm::erf(self)
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Row-major matrix operand for [`gemm`]; `trans` reads the stored matrix
/// transposed.
#[derive(Clone, Copy)]
pub(crate) struct Mat<'a, T> {
    pub data: &'a [T],
    pub trans: bool,
}

impl<'a, T> Mat<'a, T> {
    pub fn n(data: &'a [T]) -> Self {
        Mat { data, trans: false }
    }
    pub fn t(data: &'a [T]) -> Self {
        Mat { data, trans: true }
    }
}

const PAR_THRESHOLD: usize = 1 << 18;

/// `C[m,n] = A[m,k] * B[k,n] + beta * C`, row-major, with optional transposes.
///
/// Large products are split over rows of `C`; each row is owned by exactly one
/// task, so the result does not depend on the worker count.
pub(crate) fn gemm<T: Real>(m: usize, k: usize, n: usize, a: Mat<T>, b: Mat<T>, beta: T, c: &mut [T]) {
    assert!(a.data.len() >= m * k, "gemm: A too short");
    assert!(b.data.len() >= k * n, "gemm: B too short");
    assert!(c.len() >= m * n, "gemm: C too short");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c[..m * n].iter_mut() {
            *v = *v * beta;
        }
        return;
    }
    let (rsa, csa) = if a.trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b.trans { (1, k as isize) } else { (n as isize, 1) };
    let workers = rayon::current_num_threads();
    if workers <= 1 || m * n * k < PAR_THRESHOLD || m < 2 {
        // SAFETY: bounds checked above; strides describe the stated shapes.
        unsafe {
            T::gemm_raw(
                m, k, n, T::one(), a.data.as_ptr(), rsa, csa, b.data.as_ptr(), rsb, csb, beta,
                c.as_mut_ptr(), n as isize, 1,
            );
        }
        return;
    }
    let rows = m.div_ceil(workers);
    c[..m * n].par_chunks_mut(rows * n).enumerate().for_each(|(i, chunk)| {
        let r0 = i * rows;
        let mr = chunk.len() / n;
        let a_off = r0 as isize * rsa;
        // SAFETY: the sub-block of A starting at row r0 spans mr rows inside A.
        unsafe {
            T::gemm_raw(
                mr, k, n, T::one(), a.data.as_ptr().offset(a_off), rsa, csa, b.data.as_ptr(), rsb,
                csb, beta, chunk.as_mut_ptr(), n as isize, 1,
            );
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], at: bool, b: &[f64], bt: bool) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    let av = if at { a[p * m + i] } else { a[i * k + p] };
                    let bv = if bt { b[j * k + p] } else { b[p * n + j] };
                    s += av * bv;
                }
                c[i * n + j] = s;
            }
        }
        c
    }

    #[test]
    fn gemm_matches_naive_for_all_transposes() {
        let (m, k, n) = (5, 7, 3);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        for at in [false, true] {
            for bt in [false, true] {
                let mut c = vec![0.0; m * n];
                gemm(m, k, n, Mat { data: &a, trans: at }, Mat { data: &b, trans: bt }, 0.0, &mut c);
                let want = naive(m, k, n, &a, at, &b, bt);
                for (x, y) in c.iter().zip(&want) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }
}
