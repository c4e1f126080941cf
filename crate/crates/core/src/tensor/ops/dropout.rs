use crate::error::{Error, Result};
use crate::tensor::tensor::{Computed, Op, Saved};
use crate::tensor::{Real, Rng, Tensor};

/// Inverted dropout with a mask drawn before the op is recorded, so the
/// recorded graph replays identically.
struct Dropout {
    keep: Vec<bool>,
    scale: f64,
}

impl<T: Real> Op<T> for Dropout {
    fn name(&self) -> &'static str {
        "dropout"
    }

    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Computed<T>> {
        let x = inputs[0];
        let s = T::from_f64(self.scale);
        let data = x.data().iter().zip(&self.keep).map(|(&v, &k)| if k { v * s } else { T::zero() }).collect();
        Ok(Computed::new(x.shape().to_vec(), data))
    }

    fn backward(&self, _: &[&Tensor<T>], _: &Saved<T>, _: &[T], grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let s = T::from_f64(self.scale);
        vec![Some(grad.iter().zip(&self.keep).map(|(&g, &k)| if k { g * s } else { T::zero() }).collect())]
    }
}

impl<T: Real> Tensor<T> {
    /// Zeroes each element with probability `rate` and rescales survivors by
    /// `1 / (1 - rate)`. The identity when `training` is false or `rate == 0`.
    pub fn dropout(&self, rate: f64, rng: &mut Rng, training: bool) -> Result<Tensor<T>> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate must lie in [0,1), got {rate}")));
        }
        if !training || rate == 0.0 {
            return Ok(self.clone());
        }
        let keep = (0..self.numel()).map(|_| !rng.bernoulli(rate)).collect();
        Tensor::apply(Dropout { keep, scale: 1.0 / (1.0 - rate) }, &[self])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_is_identity() {
        let x = Tensor::<f32>::from_f64(&[1.0, -2.0, 3.0], &[3]).unwrap();
        let y = x.dropout(0.0, &mut Rng::new(0), true).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn eval_mode_is_identity() {
        let x = Tensor::<f32>::ones(&[100]);
        let y = x.dropout(0.5, &mut Rng::new(0), false).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn survivors_are_rescaled() {
        let x = Tensor::<f64>::ones(&[10_000]);
        let y = x.dropout(0.25, &mut Rng::new(4), true).unwrap();
        let kept = y.data().iter().filter(|&&v| v != 0.0).count();
        assert!(y.data().iter().all(|&v| v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-12));
        assert!((kept as f64 / 10_000.0 - 0.75).abs() < 0.02);
    }

    #[test]
    fn rejects_rate_one() {
        assert!(Tensor::<f32>::ones(&[2]).dropout(1.0, &mut Rng::new(0), true).is_err());
    }
}
