use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::scalar::{gemm, Mat};
use crate::tensor::tensor::{Computed, Op, Saved};
use crate::tensor::{Real, Tensor};

/// `floor((size + 2 * padding - kernel) / stride) + 1`, or `None` when the
/// kernel does not fit.
pub fn conv_output_size(size: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = size + 2 * padding;
    (stride >= 1 && kernel >= 1 && padded >= kernel).then(|| (padded - kernel) / stride + 1)
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Geometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Geometry {
    fn col_rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Unfolds one `[C, H, W]` image into `[C*kh*kw, out_h*out_w]` columns.
pub(crate) fn im2col<T: Real>(img: &[T], g: &Geometry, cols: &mut [T]) {
    let l = g.col_cols();
    for c in 0..g.channels {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * l..(row + 1) * l];
                for oy in 0..g.out_h {
                    let y = (oy * g.stride + ki) as isize - g.padding as isize;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if y < 0 || y >= g.height as isize {
                        line.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &img[(c * g.height + y as usize) * g.width..][..g.width];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let x = (ox * g.stride + kj) as isize - g.padding as isize;
                        *v = if x < 0 || x >= g.width as isize { T::zero() } else { src[x as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back, accumulating into `img`.
pub(crate) fn col2im<T: Real>(cols: &[T], g: &Geometry, img: &mut [T]) {
    let l = g.col_cols();
    for c in 0..g.channels {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * l..(row + 1) * l];
                for oy in 0..g.out_h {
                    let y = (oy * g.stride + ki) as isize - g.padding as isize;
                    if y < 0 || y >= g.height as isize {
                        continue;
                    }
                    let dst = &mut img[(c * g.height + y as usize) * g.width..][..g.width];
                    for ox in 0..g.out_w {
                        let x = (ox * g.stride + kj) as isize - g.padding as isize;
                        if x >= 0 && x < g.width as isize {
                            dst[x as usize] = dst[x as usize] + src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

/// 2-D convolution over `[N, C, H, W]` via im2col + GEMM.
struct Conv2d {
    stride: usize,
    padding: usize,
}

impl Conv2d {
    fn geometry(&self, x: &[usize], w: &[usize]) -> Result<(usize, usize, Geometry)> {
        if x.len() != 4 || w.len() != 4 {
            return Err(Error::Dimension(format!("conv2d expects [N,C,H,W] input and [O,C,kh,kw] weight, got {x:?} and {w:?}")));
        }
        if x[1] != w[1] {
            return Err(Error::Dimension(format!(
                "conv2d weight {w:?} expects {} input channels, input {x:?} has {}",
                w[1], x[1]
            )));
        }
        let out_h = conv_output_size(x[2], w[2], self.stride, self.padding);
        let out_w = conv_output_size(x[3], w[3], self.stride, self.padding);
        let (Some(out_h), Some(out_w)) = (out_h, out_w) else {
            return Err(Error::Dimension(format!(
                "conv2d kernel {w:?} (stride {}, padding {}) does not fit input {x:?}",
                self.stride, self.padding
            )));
        };
        let g = Geometry {
            channels: x[1],
            height: x[2],
            width: x[3],
            kh: w[2],
            kw: w[3],
            stride: self.stride,
            padding: self.padding,
            out_h,
            out_w,
        };
        Ok((x[0], w[0], g))
    }
}

impl<T: Real> Op<T> for Conv2d {
    fn name(&self) -> &'static str {
        "conv2d"
    }

    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Computed<T>> {
        let (x, w) = (inputs[0], inputs[1]);
        let (n, o, g) = self.geometry(x.shape(), w.shape())?;
        let bias = inputs.get(2).map(|b| b.data());
        if let Some(b) = bias {
            if b.len() != o {
                return Err(Error::Dimension(format!("conv2d bias has {} values for {o} filters", b.len())));
            }
        }
        let (k, l) = (g.col_rows(), g.col_cols());
        let in_per = g.channels * g.height * g.width;
        let mut out = vec![T::zero(); n * o * l];
        out.par_chunks_mut(o * l).enumerate().for_each_init(
            || vec![T::zero(); k * l],
            |cols, (i, dst)| {
                im2col(&x.data()[i * in_per..(i + 1) * in_per], &g, cols);
                if let Some(b) = bias {
                    for (row, &bv) in dst.chunks_mut(l).zip(b) {
                        row.iter_mut().for_each(|v| *v = bv);
                    }
                }
                gemm(o, k, l, Mat::n(w.data()), Mat::n(cols), T::one(), dst);
            },
        );
        Ok(Computed::new(vec![n, o, g.out_h, g.out_w], out))
    }

    fn backward(&self, inputs: &[&Tensor<T>], _: &Saved<T>, _: &[T], grad: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let (x, w) = (inputs[0], inputs[1]);
        let (n, o, g) = self.geometry(x.shape(), w.shape()).expect("validated in forward");
        let (k, l) = (g.col_rows(), g.col_cols());
        let in_per = g.channels * g.height * g.width;

        let gx = needs[0].then(|| {
            let mut gx = vec![T::zero(); x.numel()];
            gx.par_chunks_mut(in_per).enumerate().for_each_init(
                || vec![T::zero(); k * l],
                |dcols, (i, dst)| {
                    gemm(k, o, l, Mat::t(w.data()), Mat::n(&grad[i * o * l..(i + 1) * o * l]), T::zero(), dcols);
                    col2im(dcols, &g, dst);
                },
            );
            gx
        });

        let gw = needs[1].then(|| {
            // Fixed contiguous sample groups, each summed sequentially, then
            // reduced in group order.
            let groups = rayon::current_num_threads().clamp(1, n.max(1));
            let per = n.div_ceil(groups);
            let partials: Vec<Vec<T>> = (0..groups)
                .into_par_iter()
                .map(|gi| {
                    let mut acc = vec![T::zero(); w.numel()];
                    let mut cols = vec![T::zero(); k * l];
                    for i in gi * per..((gi + 1) * per).min(n) {
                        im2col(&x.data()[i * in_per..(i + 1) * in_per], &g, &mut cols);
                        gemm(o, l, k, Mat::n(&grad[i * o * l..(i + 1) * o * l]), Mat::t(&cols), T::one(), &mut acc);
                    }
                    acc
                })
                .collect();
            let mut gw = vec![T::zero(); w.numel()];
            for p in &partials {
                super::add_into(&mut gw, p);
            }
            gw
        });

        let mut out = vec![gx, gw];
        if inputs.len() > 2 {
            out.push(needs[2].then(|| {
                let mut gb = vec![T::zero(); o];
                for sample in grad.chunks(o * l) {
                    for (b, row) in gb.iter_mut().zip(sample.chunks(l)) {
                        *b = row.iter().fold(*b, |a, &v| a + v);
                    }
                }
                gb
            }));
        }
        out
    }
}

impl<T: Real> Tensor<T> {
    /// Convolution of `[C, H, W]` or `[N, C, H, W]` input with an
    /// `[O, C, kh, kw]` kernel.
    pub fn conv2d(&self, weight: &Tensor<T>, bias: Option<&Tensor<T>>, stride: usize, padding: usize) -> Result<Tensor<T>> {
        if stride == 0 {
            return Err(Error::Config("conv2d stride must be at least 1".into()));
        }
        let unbatched = self.ndim() == 3;
        let x = if unbatched {
            let s = self.shape();
            self.reshape(&[1, s[0], s[1], s[2]])?
        } else {
            self.clone()
        };
        let op = Conv2d { stride, padding };
        let y = match bias {
            Some(b) => Tensor::apply(op, &[&x, weight, b])?,
            None => Tensor::apply(op, &[&x, weight])?,
        };
        if unbatched {
            let s = y.shape().to_vec();
            y.reshape(&s[1..])
        } else {
            Ok(y)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    /// Direct nested-loop convolution, independent of the im2col path.
    fn naive_conv(x: &[f64], c: usize, h: usize, w: usize, k: &[f64], o: usize, kh: usize, kw: usize, b: &[f64], stride: usize, pad: usize) -> Vec<f64> {
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        let mut out = vec![0.0; o * oh * ow];
        for f in 0..o {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut s = b[f];
                    for ch in 0..c {
                        for i in 0..kh {
                            for j in 0..kw {
                                let y = (oy * stride + i) as isize - pad as isize;
                                let xx = (ox * stride + j) as isize - pad as isize;
                                if y >= 0 && xx >= 0 && (y as usize) < h && (xx as usize) < w {
                                    s += x[(ch * h + y as usize) * w + xx as usize] * k[((f * c + ch) * kh + i) * kw + j];
                                }
                            }
                        }
                    }
                    out[(f * oh + oy) * ow + ox] = s;
                }
            }
        }
        out
    }

    #[test]
    fn matches_nested_loop_oracle() {
        let mut rng = Rng::new(5);
        let xs: Vec<f64> = (0..2 * 5 * 5).map(|_| rng.normal()).collect();
        let ks: Vec<f64> = (0..3 * 2 * 3 * 3).map(|_| rng.normal()).collect();
        let bs: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
        let x = Tensor::<f64>::from_f64(&xs, &[2, 5, 5]).unwrap();
        let k = Tensor::<f64>::from_f64(&ks, &[3, 2, 3, 3]).unwrap();
        let b = Tensor::<f64>::from_f64(&bs, &[3]).unwrap();
        for (stride, pad) in [(1, 1), (2, 0), (2, 1)] {
            let y = x.conv2d(&k, Some(&b), stride, pad).unwrap();
            let want = naive_conv(&xs, 2, 5, 5, &ks, 3, 3, 3, &bs, stride, pad);
            assert_eq!(y.numel(), want.len());
            for (a, e) in y.data().iter().zip(&want) {
                assert!((a - e).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn resnet_stem_shape() {
        let x = Tensor::<f32>::zeros(&[3, 128, 128]);
        let k = Tensor::<f32>::zeros(&[64, 3, 7, 7]);
        let y = x.conv2d(&k, None, 2, 3).unwrap();
        assert_eq!(y.shape(), &[64, 64, 64]);
    }

    #[test]
    fn zero_kernel_gives_zero_output() {
        let mut rng = Rng::new(1);
        let xs: Vec<f64> = (0..3 * 6 * 6).map(|_| rng.normal()).collect();
        let x = Tensor::<f32>::from_f64(&xs, &[3, 6, 6]).unwrap();
        let y = x.conv2d(&Tensor::zeros(&[4, 3, 3, 3]), Some(&Tensor::zeros(&[4])), 1, 1).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn channel_mismatch_names_both_shapes() {
        let x = Tensor::<f32>::zeros(&[3, 8, 8]);
        let k = Tensor::<f32>::zeros(&[4, 2, 3, 3]);
        let err = x.conv2d(&k, None, 1, 1).unwrap_err().to_string();
        assert!(err.contains("[4, 2, 3, 3]") && err.contains("[1, 3, 8, 8]"), "{err}");
    }

    #[test]
    fn kernel_larger_than_input() {
        let x = Tensor::<f32>::zeros(&[1, 2, 2]);
        let k = Tensor::<f32>::zeros(&[1, 1, 5, 5]);
        assert!(matches!(x.conv2d(&k, None, 1, 0), Err(Error::Dimension(_))));
    }
}
