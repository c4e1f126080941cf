use crate::error::{Error, Result};
use crate::tensor::tensor::{Computed, Op, Saved};
use crate::tensor::{Real, Tensor};

use super::conv_output_size;

/// Max pooling over `[N, C, H, W]`; padded cells never win.
struct MaxPool2d {
    window: usize,
    stride: usize,
    padding: usize,
}

impl<T: Real> Op<T> for MaxPool2d {
    fn name(&self) -> &'static str {
        "maxpool2d"
    }

    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Computed<T>> {
        let x = inputs[0];
        let s = x.shape();
        let (planes, h, w) = (s[0] * s[1], s[2], s[3]);
        let oh = conv_output_size(h, self.window, self.stride, self.padding);
        let ow = conv_output_size(w, self.window, self.stride, self.padding);
        let (Some(oh), Some(ow)) = (oh, ow) else {
            return Err(Error::Dimension(format!(
                "maxpool window {} (padding {}) larger than input {s:?}",
                self.window, self.padding
            )));
        };
        let mut out = Vec::with_capacity(planes * oh * ow);
        let mut argmax = Vec::with_capacity(planes * oh * ow);
        for p in 0..planes {
            let plane = &x.data()[p * h * w..(p + 1) * h * w];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = T::neg_infinity();
                    let mut best_idx = usize::MAX;
                    for i in 0..self.window {
                        let y = (oy * self.stride + i) as isize - self.padding as isize;
                        if y < 0 || y >= h as isize {
                            continue;
                        }
                        for j in 0..self.window {
                            let xx = (ox * self.stride + j) as isize - self.padding as isize;
                            if xx < 0 || xx >= w as isize {
                                continue;
                            }
                            let idx = y as usize * w + xx as usize;
                            if best_idx == usize::MAX || plane[idx] > best {
                                best = plane[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(p * h * w + best_idx);
                }
            }
        }
        let saved = Saved { values: vec![], indices: argmax };
        Ok(Computed::new(vec![s[0], s[1], oh, ow], out).with_saved(saved))
    }

    fn backward(&self, inputs: &[&Tensor<T>], saved: &Saved<T>, _: &[T], grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let mut g = vec![T::zero(); inputs[0].numel()];
        for (&idx, &gv) in saved.indices.iter().zip(grad) {
            g[idx] = g[idx] + gv;
        }
        vec![Some(g)]
    }
}

/// Mean over the spatial axes: `[N, C, H, W] -> [N, C]`.
struct GlobalAvgPool;

impl<T: Real> Op<T> for GlobalAvgPool {
    fn name(&self) -> &'static str {
        "global_avg_pool"
    }

    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Computed<T>> {
        let x = inputs[0];
        let s = x.shape();
        let area = s[2] * s[3];
        let inv = T::from_f64(1.0 / area as f64);
        let out = x.data().chunks(area).map(|c| c.iter().fold(T::zero(), |a, &b| a + b) * inv).collect();
        Ok(Computed::new(vec![s[0], s[1]], out))
    }

    fn backward(&self, inputs: &[&Tensor<T>], _: &Saved<T>, _: &[T], grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let s = inputs[0].shape();
        let area = s[2] * s[3];
        let inv = T::from_f64(1.0 / area as f64);
        let mut g = Vec::with_capacity(inputs[0].numel());
        for &gv in grad {
            g.extend(std::iter::repeat_n(gv * inv, area));
        }
        vec![Some(g)]
    }
}

impl<T: Real> Tensor<T> {
    fn as_batched(&self, what: &str) -> Result<(Tensor<T>, bool)> {
        match self.ndim() {
            3 => {
                let s = self.shape();
                Ok((self.reshape(&[1, s[0], s[1], s[2]])?, true))
            }
            4 => Ok((self.clone(), false)),
            _ => Err(Error::Dimension(format!("{what} expects [C,H,W] or [N,C,H,W], got {:?}", self.shape()))),
        }
    }

    /// Max pooling on `[C, H, W]` or `[N, C, H, W]`. `padding` must not
    /// exceed half the window.
    pub fn maxpool2d(&self, window: usize, stride: usize, padding: usize) -> Result<Tensor<T>> {
        if window == 0 || stride == 0 {
            return Err(Error::Config("maxpool window and stride must be at least 1".into()));
        }
        if 2 * padding > window {
            return Err(Error::Config(format!("maxpool padding {padding} exceeds half the window {window}")));
        }
        let (x, unbatched) = self.as_batched("maxpool2d")?;
        let y = Tensor::apply(MaxPool2d { window, stride, padding }, &[&x])?;
        if unbatched {
            let s = y.shape().to_vec();
            y.reshape(&s[1..])
        } else {
            Ok(y)
        }
    }

    /// Global average pooling: `[C, H, W] -> [C]`, `[N, C, H, W] -> [N, C]`.
    pub fn global_avg_pool(&self) -> Result<Tensor<T>> {
        let (x, unbatched) = self.as_batched("global_avg_pool")?;
        let y = Tensor::apply(GlobalAvgPool, &[&x])?;
        if unbatched {
            y.reshape(&[y.shape()[1]])
        } else {
            Ok(y)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    #[test]
    fn resnet_stem_pool_shape() {
        let x = Tensor::<f32>::zeros(&[64, 64, 64]);
        assert_eq!(x.maxpool2d(3, 2, 1).unwrap().shape(), &[64, 32, 32]);
    }

    #[test]
    fn constant_input_gives_constant_output() {
        let x = Tensor::<f32>::full(&[2, 7, 7], 3.5);
        let y = x.maxpool2d(3, 2, 1).unwrap();
        assert!(y.data().iter().all(|&v| v == 3.5));
    }

    #[test]
    fn matches_nested_loop_max() {
        let mut rng = Rng::new(9);
        let xs: Vec<f64> = (0..36).map(|_| rng.normal()).collect();
        let x = Tensor::<f64>::from_f64(&xs, &[1, 6, 6]).unwrap();
        let y = x.maxpool2d(2, 2, 0).unwrap();
        assert_eq!(y.shape(), &[1, 3, 3]);
        for oy in 0..3 {
            for ox in 0..3 {
                let mut m = f64::NEG_INFINITY;
                for i in 0..2 {
                    for j in 0..2 {
                        m = m.max(xs[(oy * 2 + i) * 6 + ox * 2 + j]);
                    }
                }
                assert_eq!(y.data()[oy * 3 + ox], m);
            }
        }
    }

    #[test]
    fn window_larger_than_input() {
        let x = Tensor::<f32>::zeros(&[1, 2, 2]);
        assert!(matches!(x.maxpool2d(4, 1, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn gap_shape() {
        let x = Tensor::<f32>::ones(&[2048, 4, 4]);
        let y = x.global_avg_pool().unwrap();
        assert_eq!(y.shape(), &[2048]);
        assert!(y.data().iter().all(|&v| v == 1.0));
    }
}
