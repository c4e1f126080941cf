use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{mix_seed, resize_bilinear, Rng, Tensor};

use super::image::resize_to_side;
use super::label::{ClassLabel, Split};
use super::manifest::DatasetManifest;
use super::normalize::{compute_normalization, normalize_in_place, NormStats};

/// A mini-batch of normalised images and task-class indices.
#[derive(Clone, Debug)]
pub struct Batch {
    pub pixels: Tensor<f32>,
    pub labels: Vec<usize>,
    pub ids: Vec<String>,
    /// Positions of the samples within their [`PreparedData`].
    pub indices: Vec<usize>,
}

/// Decoded, resized and normalised samples of one task.
///
/// Labels are indices into `classes`. Normalisation statistics come from
/// the train split unless supplied.
pub struct PreparedData {
    classes: Vec<ClassLabel>,
    side: usize,
    stats: NormStats,
    ids: Vec<String>,
    splits: Vec<Split>,
    labels: Vec<usize>,
    pixels: Vec<Vec<f32>>,
}

impl PreparedData {
    pub fn new(manifest: &DatasetManifest, classes: &[ClassLabel], side: usize, stats: Option<NormStats>) -> Result<Self> {
        let samples: Vec<_> = manifest.samples.iter().filter(|s| classes.contains(&s.label)).collect();
        if let Some(s) = samples.iter().find(|s| s.split.is_none()) {
            return Err(Error::Usage(format!("sample {} has no split; split the manifest first", s.id)));
        }
        let mut pixels: Vec<Vec<f32>> =
            samples.par_iter().map(|s| resize_to_side(&s.source.decode()?, side)).collect::<Result<_>>()?;
        let stats = stats.unwrap_or_else(|| {
            compute_normalization(
                samples.iter().zip(&pixels).filter(|(s, _)| s.split == Some(Split::Train)).map(|(_, p)| p.as_slice()),
            )
        });
        pixels.par_iter_mut().for_each(|p| normalize_in_place(p, &stats));
        Ok(PreparedData {
            classes: classes.to_vec(),
            side,
            stats,
            ids: samples.iter().map(|s| s.id.clone()).collect(),
            splits: samples.iter().map(|s| s.split.unwrap()).collect(),
            labels: samples.iter().map(|s| classes.iter().position(|&c| c == s.label).unwrap()).collect(),
            pixels,
        })
    }

    pub fn classes(&self) -> &[ClassLabel] {
        &self.classes
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn stats(&self) -> &NormStats {
        &self.stats
    }

    /// Positions of a split's samples, in manifest order.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.ids.len()).filter(|&i| self.splits[i] == split).collect()
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.splits.iter().filter(|&&s| s == split).count()
    }

    pub fn labels(&self, split: Split) -> Vec<usize> {
        self.indices(split).into_iter().map(|i| self.labels[i]).collect()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn pixels(&self, index: usize) -> &[f32] {
        &self.pixels[index]
    }

    /// The same samples bilinearly resampled to `side` after normalisation,
    /// matching what the hybrid feeds its ViT branch.
    pub fn resampled(&self, side: usize) -> Result<PreparedData> {
        if side < 8 {
            return Err(Error::Usage(format!("side {side} is below 8 pixels")));
        }
        let pixels = self.pixels.par_iter().map(|p| resize_bilinear(p, 3, self.side, self.side, side, side)).collect();
        Ok(PreparedData { side, pixels, ..self.clone_meta() })
    }

    fn clone_meta(&self) -> PreparedData {
        PreparedData {
            classes: self.classes.clone(),
            side: self.side,
            stats: self.stats,
            ids: self.ids.clone(),
            splits: self.splits.clone(),
            labels: self.labels.clone(),
            pixels: Vec::new(),
        }
    }

    /// One pass over `split`. Flips apply only to the train split.
    pub fn batches(&self, split: Split, batch_size: usize, shuffle: bool, seed: u64, augment: bool) -> Result<Batches<'_>> {
        if batch_size == 0 {
            return Err(Error::Usage("batch size must be at least 1".into()));
        }
        let mut order = self.indices(split);
        if shuffle {
            Rng::new(seed).shuffle(&mut order);
        }
        let flips = (augment && split == Split::Train).then(|| Rng::new(mix_seed(seed, 0xf11f)));
        Ok(Batches { data: self, order, pos: 0, batch_size, flips })
    }
}

pub struct Batches<'a> {
    data: &'a PreparedData,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    flips: Option<Rng>,
}

fn flip(src: &[f32], side: usize, horizontal: bool, vertical: bool) -> Vec<f32> {
    let mut out = vec![0.0; src.len()];
    for c in 0..3 {
        for y in 0..side {
            let sy = if vertical { side - 1 - y } else { y };
            for x in 0..side {
                let sx = if horizontal { side - 1 - x } else { x };
                out[(c * side + y) * side + x] = src[(c * side + sy) * side + sx];
            }
        }
    }
    out
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let idx = &self.order[self.pos..end];
        self.pos = end;
        let side = self.data.side;
        let mut pixels = Vec::with_capacity(idx.len() * 3 * side * side);
        for &i in idx {
            let src = &self.data.pixels[i];
            match self.flips.as_mut() {
                Some(rng) => {
                    let (h, v) = (rng.bernoulli(0.5), rng.bernoulli(0.5));
                    pixels.extend(flip(src, side, h, v));
                }
                None => pixels.extend_from_slice(src),
            }
        }
        Some(Batch {
            pixels: Tensor::from_vec(pixels, &[idx.len(), 3, side, side]).expect("batch shape"),
            labels: idx.iter().map(|&i| self.data.labels[i]).collect(),
            ids: idx.iter().map(|&i| self.data.ids[i].clone()).collect(),
            indices: idx.to_vec(),
        })
    }
}
