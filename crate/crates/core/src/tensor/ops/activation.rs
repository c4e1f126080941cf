use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};
use crate::tensor::tensor::{Computed, Op, Saved};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug)]
enum Kind {
    Relu,
    LeakyRelu(f64),
    /// Exact form `x * Phi(x)`.
    Gelu,
}

struct Unary(Kind);

fn gelu<T: Real>(x: T) -> T {
    let half = T::from_f64(0.5);
    half * x * (T::one() + (x * T::from_f64(FRAC_1_SQRT_2)).erf())
}

fn gelu_grad<T: Real>(x: T) -> T {
    let half = T::from_f64(0.5);
    let cdf = half * (T::one() + (x * T::from_f64(FRAC_1_SQRT_2)).erf());
    let pdf = (-(x * x) * half).exp() * T::from_f64(1.0 / (2.0 * PI).sqrt());
    cdf + x * pdf
}

impl<T: Real> Op<T> for Unary {
    fn name(&self) -> &'static str {
        match self.0 {
            Kind::Relu => "relu",
            Kind::LeakyRelu(_) => "leaky_relu",
            Kind::Gelu => "gelu",
        }
    }

    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Computed<T>> {
        let x = inputs[0];
        let data = match self.0 {
            Kind::Relu => x.data().iter().map(|&v| v.max(T::zero())).collect(),
            Kind::LeakyRelu(a) => {
                let a = T::from_f64(a);
                x.data().iter().map(|&v| if v > T::zero() { v } else { v * a }).collect()
            }
            Kind::Gelu => x.data().iter().map(|&v| gelu(v)).collect(),
        };
        Ok(Computed::new(x.shape().to_vec(), data))
    }

    fn backward(&self, inputs: &[&Tensor<T>], _: &Saved<T>, _: &[T], grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let x = inputs[0].data();
        let g: Vec<T> = match self.0 {
            Kind::Relu => x.iter().zip(grad).map(|(&v, &g)| if v > T::zero() { g } else { T::zero() }).collect(),
            Kind::LeakyRelu(a) => {
                let a = T::from_f64(a);
                x.iter().zip(grad).map(|(&v, &g)| if v > T::zero() { g } else { g * a }).collect()
            }
            Kind::Gelu => x.iter().zip(grad).map(|(&v, &g)| g * gelu_grad(v)).collect(),
        };
        vec![Some(g)]
    }
}

/// Softmax over the trailing axis.
struct Softmax;

pub(crate) fn softmax_rows<T: Real>(data: &[T], width: usize) -> Vec<T> {
    let mut out = vec![T::zero(); data.len()];
    for (row, o) in data.chunks(width).zip(out.chunks_mut(width)) {
        let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let mut s = T::zero();
        for (oi, &v) in o.iter_mut().zip(row) {
            *oi = (v - m).exp();
            s = s + *oi;
        }
        for oi in o.iter_mut() {
            *oi = *oi / s;
        }
    }
    out
}

impl<T: Real> Op<T> for Softmax {
    fn name(&self) -> &'static str {
        "softmax"
    }

    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Computed<T>> {
        let x = inputs[0];
        let w = *x.shape().last().ok_or_else(|| Error::Dimension("softmax of a scalar".into()))?;
        Ok(Computed::new(x.shape().to_vec(), softmax_rows(x.data(), w)))
    }

    fn backward(&self, inputs: &[&Tensor<T>], _: &Saved<T>, out: &[T], grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let w = *inputs[0].shape().last().unwrap();
        let mut gx = vec![T::zero(); out.len()];
        for ((y, g), dx) in out.chunks(w).zip(grad.chunks(w)).zip(gx.chunks_mut(w)) {
            let dot = y.iter().zip(g).fold(T::zero(), |a, (&yi, &gi)| a + yi * gi);
            for ((d, &yi), &gi) in dx.iter_mut().zip(y).zip(g) {
                *d = yi * (gi - dot);
            }
        }
        vec![Some(gx)]
    }
}

impl<T: Real> Tensor<T> {
    pub fn relu(&self) -> Result<Tensor<T>> {
        Tensor::apply(Unary(Kind::Relu), &[self])
    }

    pub fn leaky_relu(&self, alpha: f64) -> Result<Tensor<T>> {
        if !(0.0..1.0).contains(&alpha) || alpha == 0.0 {
            return Err(Error::Config(format!("leaky_relu alpha must lie in (0,1), got {alpha}")));
        }
        Tensor::apply(Unary(Kind::LeakyRelu(alpha)), &[self])
    }

    pub fn gelu(&self) -> Result<Tensor<T>> {
        Tensor::apply(Unary(Kind::Gelu), &[self])
    }

    pub fn softmax(&self) -> Result<Tensor<T>> {
        Tensor::apply(Softmax, &[self])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Maclaurin series of erf, summed in f64 until terms vanish.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        while term.abs() > 1e-18 {
            n += 1.0;
            term *= -x * x / n;
            sum += term / (2.0 * n + 1.0);
        }
        2.0 / PI.sqrt() * sum
    }

    #[test]
    fn leaky_relu_of_minus_two() {
        let x = Tensor::<f64>::from_f64(&[-2.0, 3.0], &[2]).unwrap();
        assert_eq!(x.leaky_relu(0.25).unwrap().to_f64_vec(), vec![-0.5, 3.0]);
    }

    #[test]
    fn leaky_relu_rejects_bad_alpha() {
        let x = Tensor::<f64>::zeros(&[2]);
        assert!(x.leaky_relu(1.5).is_err());
        assert!(x.leaky_relu(0.0).is_err());
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let x = Tensor::<f32>::zeros(&[4]);
        for v in x.softmax().unwrap().data() {
            assert_eq!(*v, 0.25);
        }
    }

    #[test]
    fn gelu_matches_erf_series() {
        let x = Tensor::<f64>::from_f64(&[0.0, 1.0, -0.7, 2.3], &[4]).unwrap();
        let y = x.gelu().unwrap().to_f64_vec();
        assert_eq!(y[0], 0.0);
        for (i, &v) in [0.0, 1.0, -0.7, 2.3].iter().enumerate() {
            let want = 0.5 * v * (1.0 + erf_series(v / 2f64.sqrt()));
            assert!((y[i] - want).abs() < 1e-6, "gelu({v}) = {} vs {want}", y[i]);
        }
    }

    #[test]
    fn relu_clamps() {
        let x = Tensor::<f32>::from_f64(&[-1.0, 0.0, 2.0], &[3]).unwrap();
        assert_eq!(x.relu().unwrap().to_f64_vec(), vec![0.0, 0.0, 2.0]);
    }
}
