use crate::error::{Error, Result};
use crate::tensor::tensor::{Computed, Op, Saved};
use crate::tensor::{Real, Tensor};

/// `a + b` where `b`'s shape is a suffix of `a`'s (broadcast over leading axes).
struct Add;

impl<T: Real> Op<T> for Add {
    fn name(&self) -> &'static str {
        "add"
    }

    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Computed<T>> {
        let (a, b) = (inputs[0], inputs[1]);
        let (sa, sb) = (a.shape(), b.shape());
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(Error::Dimension(format!("cannot add {sb:?} onto {sa:?}")));
        }
        let bn = b.numel().max(1);
        let data = a.data().iter().enumerate().map(|(i, &x)| x + b.data()[i % bn]).collect();
        Ok(Computed::new(sa.to_vec(), data))
    }

    fn backward(&self, inputs: &[&Tensor<T>], _: &Saved<T>, _: &[T], grad: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let gb = needs[1].then(|| {
            let bn = inputs[1].numel();
            let mut acc = vec![T::zero(); bn];
            for chunk in grad.chunks(bn) {
                super::add_into(&mut acc, chunk);
            }
            acc
        });
        vec![needs[0].then(|| grad.to_vec()), gb]
    }
}

struct Mul;

impl<T: Real> Op<T> for Mul {
    fn name(&self) -> &'static str {
        "mul"
    }

    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Computed<T>> {
        let (a, b) = (inputs[0], inputs[1]);
        if a.shape() != b.shape() {
            return Err(Error::Dimension(format!("mul of {:?} and {:?}", a.shape(), b.shape())));
        }
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
        Ok(Computed::new(a.shape().to_vec(), data))
    }

    fn backward(&self, inputs: &[&Tensor<T>], _: &Saved<T>, _: &[T], grad: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let prod = |other: &Tensor<T>| grad.iter().zip(other.data()).map(|(&g, &o)| g * o).collect();
        vec![needs[0].then(|| prod(inputs[1])), needs[1].then(|| prod(inputs[0]))]
    }
}

struct Scale(f64);

impl<T: Real> Op<T> for Scale {
    fn name(&self) -> &'static str {
        "scale"
    }

    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Computed<T>> {
        let c = T::from_f64(self.0);
        Ok(Computed::new(inputs[0].shape().to_vec(), inputs[0].data().iter().map(|&x| x * c).collect()))
    }

    fn backward(&self, _: &[&Tensor<T>], _: &Saved<T>, _: &[T], grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let c = T::from_f64(self.0);
        vec![Some(grad.iter().map(|&g| g * c).collect())]
    }
}

struct Sum;

impl<T: Real> Op<T> for Sum {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Computed<T>> {
        let s = inputs[0].data().iter().fold(T::zero(), |a, &b| a + b);
        Ok(Computed::new(vec![], vec![s]))
    }

    fn backward(&self, inputs: &[&Tensor<T>], _: &Saved<T>, _: &[T], grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        vec![Some(vec![grad[0]; inputs[0].numel()])]
    }
}

impl<T: Real> Tensor<T> {
    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        Tensor::apply(Add, &[self, other])
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        Tensor::apply(Mul, &[self, other])
    }

    pub fn scale(&self, c: f64) -> Result<Tensor<T>> {
        Tensor::apply(Scale(c), &[self])
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&self) -> Result<Tensor<T>> {
        Tensor::apply(Sum, &[self])
    }

    pub fn mean(&self) -> Result<Tensor<T>> {
        self.sum()?.scale(1.0 / self.numel().max(1) as f64)
    }
}
