use crate::error::{Error, Result};

use super::{Real, Tensor};

/// Bilinear resize of planar `[C, H, W]` data with half-pixel centres and
/// edge clamping (no antialiasing).
pub fn resize_bilinear<T: Real>(src: &[T], c: usize, h: usize, w: usize, oh: usize, ow: usize) -> Vec<T> {
    assert_eq!(src.len(), c * h * w);
    if (h, w) == (oh, ow) {
        return src.to_vec();
    }
    let taps = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|o| {
                let pos = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
                let lo = (pos.floor() as usize).min(n_in - 1);
                let hi = (lo + 1).min(n_in - 1);
                (lo, hi, pos - lo as f64)
            })
            .collect()
    };
    let ys = taps(h, oh);
    let xs = taps(w, ow);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let p = |y: usize, x: usize| plane[y * w + x].as_f64();
                let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                out.push(T::from_f64(top * (1.0 - fy) + bottom * fy));
            }
        }
    }
    out
}

impl<T: Real> Tensor<T> {
    /// Bilinear resize of the two trailing axes of a `[C, H, W]` or
    /// `[N, C, H, W]` tensor. Not differentiable: the result is a constant.
    pub fn resize_bilinear(&self, oh: usize, ow: usize) -> Result<Tensor<T>> {
        let s = self.shape();
        let (n, c, h, w) = match *s {
            [c, h, w] => (1, c, h, w),
            [n, c, h, w] => (n, c, h, w),
            _ => return Err(Error::Dimension(format!("resize expects [C, H, W] or [N, C, H, W], got {s:?}"))),
        };
        if oh == 0 || ow == 0 {
            return Err(Error::Dimension(format!("resize target {oh}x{ow} is empty")));
        }
        let per = c * h * w;
        let mut data = Vec::with_capacity(n * c * oh * ow);
        for i in 0..n {
            data.extend(resize_bilinear(&self.data()[i * per..(i + 1) * per], c, h, w, oh, ow));
        }
        let mut shape = s.to_vec();
        let r = shape.len();
        shape[r - 2] = oh;
        shape[r - 1] = ow;
        Tensor::from_vec(data, &shape)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_stays_constant() {
        let out = resize_bilinear(&[0.5f32; 3 * 7 * 5], 3, 7, 5, 16, 11);
        assert_eq!(out.len(), 3 * 16 * 11);
        assert!(out.iter().all(|&v| (v - 0.5).abs() < 1e-7));
    }

    #[test]
    fn downsample_by_two_averages_pairs() {
        // Half-pixel centres put each output sample midway between two inputs.
        let src: Vec<f64> = (0..16).map(|v| v as f64).collect();
        let out = resize_bilinear(&src, 1, 4, 4, 2, 2);
        assert_eq!(out, vec![2.5, 4.5, 10.5, 12.5]);
    }

    #[test]
    fn tensor_resize_shape() {
        let x = Tensor::<f32>::zeros(&[2, 3, 8, 8]);
        assert_eq!(x.resize_bilinear(4, 6).unwrap().shape(), &[2, 3, 4, 6]);
        assert!(Tensor::<f32>::zeros(&[8, 8]).resize_bilinear(4, 4).is_err());
    }
}
