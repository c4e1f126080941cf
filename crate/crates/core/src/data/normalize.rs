use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Smallest standard deviation used when normalising.
pub const STD_FLOOR: f64 = 1e-6;

/// Per-channel mean and standard deviation of `[0, 1]` RGB pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl NormStats {
    pub fn identity() -> Self {
        NormStats { mean: [0.0; 3], std: [1.0; 3] }
    }
}

/// Population statistics over planar `[3, H, W]` images; std is floored.
pub fn compute_normalization<'a>(images: impl IntoIterator<Item = &'a [f32]>) -> NormStats {
    let mut sum = [0.0f64; 3];
    let mut sq = [0.0f64; 3];
    let mut n = 0usize;
    let images: Vec<&[f32]> = images.into_iter().collect();
    for img in &images {
        let plane = img.len() / 3;
        for c in 0..3 {
            sum[c] += img[c * plane..(c + 1) * plane].iter().map(|&v| v as f64).sum::<f64>();
        }
        n += plane;
    }
    if n == 0 {
        return NormStats::identity();
    }
    let mean = sum.map(|s| s / n as f64);
    for img in &images {
        let plane = img.len() / 3;
        for c in 0..3 {
            sq[c] += img[c * plane..(c + 1) * plane].iter().map(|&v| (v as f64 - mean[c]).powi(2)).sum::<f64>();
        }
    }
    let std = std::array::from_fn(|c| (sq[c] / n as f64).sqrt().max(STD_FLOOR));
    NormStats { mean, std }
}

/// `(x - mean) / std` per channel of a planar `[3, H, W]` buffer, in place.
pub fn normalize_in_place(pixels: &mut [f32], stats: &NormStats) {
    let plane = pixels.len() / 3;
    for c in 0..3 {
        let (m, s) = (stats.mean[c], stats.std[c].max(STD_FLOOR));
        for v in &mut pixels[c * plane..(c + 1) * plane] {
            *v = ((*v as f64 - m) / s) as f32;
        }
    }
}

/// Normalises a `[3, H, W]` or `[N, 3, H, W]` tensor.
pub fn apply_normalization<T: Real>(x: &Tensor<T>, stats: &NormStats) -> Result<Tensor<T>> {
    let s = x.shape();
    let channel_axis = match s.len() {
        3 => 0,
        4 => 1,
        _ => return Err(Error::Dimension(format!("normalization expects [3, H, W] or [N, 3, H, W], got {s:?}"))),
    };
    if s[channel_axis] != 3 {
        return Err(Error::Dimension(format!("normalization expects 3 channels, got {s:?}")));
    }
    let plane = s[channel_axis + 1] * s[channel_axis + 2];
    let data = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = (i / plane) % 3;
            T::from_f64((v.as_f64() - stats.mean[c]) / stats.std[c].max(STD_FLOOR))
        })
        .collect();
    Tensor::from_vec(data, s)
}
