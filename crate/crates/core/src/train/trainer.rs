use std::time::Instant;

use crate::data::{PreparedData, Split};
use crate::error::{Error, Result};
use crate::models::{ArchName, ForwardCtx, ModelGraph};
use crate::tensor::{mix_seed, no_grad, Real, Tensor};

use super::adam::{adam_step, AdamState};
use super::config::TrainConfig;
use super::log::EpochRecord;

/// Tracks the best validation loss and when to stop.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        EarlyStopping { patience, min_delta, best: f64::INFINITY, best_epoch: 0, stale: 0 }
    }

    /// Records an epoch's validation loss; returns true when it is a new best.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> bool {
        if val_loss < self.best - self.min_delta {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.stale = 0;
            true
        } else {
            self.stale += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.patience > 0 && self.stale >= self.patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

/// Result of [`train`].
#[derive(Clone, Debug)]
pub struct TrainOutcome<T: Real> {
    /// Snapshot with the lowest validation loss.
    pub model: ModelGraph<T>,
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Loss and accuracy of eval-mode predictions over a split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitScore {
    pub loss: f64,
    pub accuracy: f64,
}

/// Source of model inputs: raw pixels, or cached fused features for a hybrid.
enum Inputs<T: Real> {
    Pixels,
    Fused(Vec<Vec<T>>),
}

impl<T: Real> Inputs<T> {
    fn prepare(model: &ModelGraph<T>, data: &PreparedData, batch_size: usize) -> Result<Self> {
        if model.spec().name != ArchName::Hybrid {
            return Ok(Inputs::Pixels);
        }
        // Branches are frozen and run in eval mode, so their features are fixed.
        let mut cache = vec![Vec::new(); data.indices(Split::Train).len() + data.indices(Split::Val).len() + data.indices(Split::Test).len()];
        for split in Split::ALL {
            for b in data.batches(split, batch_size, false, 0, false)? {
                let f = model.features(&b.pixels.cast::<T>())?;
                let len = f.shape()[1];
                for (row, &i) in b.indices.iter().enumerate() {
                    cache[i] = f.data()[row * len..(row + 1) * len].to_vec();
                }
            }
        }
        Ok(Inputs::Fused(cache))
    }

    fn logits(&self, model: &ModelGraph<T>, pixels: &Tensor<f32>, indices: &[usize], ctx: &mut ForwardCtx) -> Result<Tensor<T>> {
        match self {
            Inputs::Pixels => model.forward(&pixels.cast::<T>(), ctx),
            Inputs::Fused(cache) => {
                let len = cache[indices[0]].len();
                let mut rows = Vec::with_capacity(indices.len() * len);
                for &i in indices {
                    rows.extend_from_slice(&cache[i]);
                }
                model.classify_fused(&Tensor::from_vec(rows, &[indices.len(), len])?, ctx)
            }
        }
    }
}

fn batch_weight(labels: &[usize], weights: &[f64]) -> f64 {
    labels.iter().map(|&y| weights[y]).sum()
}

fn correct<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> usize {
    let k = logits.shape()[1];
    logits
        .data()
        .chunks(k)
        .zip(labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count()
}

/// Index of the largest value; the first one wins ties.
pub fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

fn score<T: Real>(model: &ModelGraph<T>, inputs: &Inputs<T>, data: &PreparedData, split: Split, weights: &[f64], batch_size: usize) -> Result<SplitScore> {
    let _guard = no_grad();
    let (mut loss, mut wsum, mut hits, mut n) = (0.0, 0.0, 0, 0);
    for b in data.batches(split, batch_size, false, 0, false)? {
        let logits = inputs.logits(model, &b.pixels, &b.indices, &mut ForwardCtx::eval())?;
        let w = batch_weight(&b.labels, weights);
        loss += logits.weighted_cross_entropy(&b.labels, weights)?.item().as_f64() * w;
        wsum += w;
        hits += correct(&logits, &b.labels);
        n += b.labels.len();
    }
    if n == 0 {
        return Err(Error::Usage(format!("the {split} split is empty")));
    }
    Ok(SplitScore { loss: loss / wsum, accuracy: hits as f64 / n as f64 })
}

/// Eval-mode weighted loss and accuracy of `model` on one split.
pub fn score_split<T: Real>(model: &ModelGraph<T>, data: &PreparedData, split: Split, weights: &[f64], batch_size: usize) -> Result<SplitScore> {
    let inputs = Inputs::prepare(model, data, batch_size)?;
    score(model, &inputs, data, split, weights, batch_size)
}

/// Runs the epoch loop and returns the snapshot with the lowest validation loss.
///
/// `weights` holds one class weight per task class. Frozen parameters are
/// left untouched. `on_epoch` sees each record as soon as it is complete.
pub fn train<T: Real>(
    model: ModelGraph<T>,
    data: &PreparedData,
    cfg: &TrainConfig,
    weights: &[f64],
    mut on_epoch: impl FnMut(&EpochRecord) -> Result<()>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if weights.len() != model.num_classes() || data.classes().len() != model.num_classes() {
        return Err(Error::Config(format!(
            "model has {} classes, task has {} and {} class weights",
            model.num_classes(),
            data.classes().len(),
            weights.len()
        )));
    }
    for split in [Split::Train, Split::Val] {
        if data.split_len(split) == 0 {
            return Err(Error::Usage(format!("the {split} split is empty")));
        }
    }
    let mut model = model;
    let inputs = Inputs::prepare(&model, data, cfg.batch_size)?;
    let mut adam = AdamState::new(model.params());
    let mut stopper = EarlyStopping::new(cfg.early_stop_patience, cfg.min_delta);
    let mut best = model.clone();
    let mut records = Vec::new();

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let epoch_seed = mix_seed(cfg.seed, epoch as u64);
        let (mut total, mut seen) = (0.0, 0usize);
        for (bi, b) in data.batches(Split::Train, cfg.batch_size, true, epoch_seed, cfg.augment)?.enumerate() {
            model.params().zero_grads();
            let mut ctx = ForwardCtx::train(mix_seed(epoch_seed, bi as u64 + 1));
            let logits = inputs.logits(&model, &b.pixels, &b.indices, &mut ctx)?;
            let loss = logits.weighted_cross_entropy(&b.labels, weights)?;
            let value = loss.item().as_f64();
            if !value.is_finite() {
                return Err(Error::NonFinite { epoch, batch: bi, loss: value });
            }
            loss.backward()?;
            // Release the graph so the update can reuse parameter storage.
            drop((loss, logits));
            adam_step(model.params_mut(), &mut adam, cfg)?;
            total += value * b.labels.len() as f64;
            seen += b.labels.len();
        }
        let val = score(&model, &inputs, data, Split::Val, weights, cfg.batch_size)?;
        let record = EpochRecord {
            epoch,
            train_loss: total / seen as f64,
            val_loss: val.loss,
            val_acc: val.accuracy,
            seconds: if cfg.log_wall_clock { start.elapsed().as_secs_f64() } else { 0.0 },
        };
        log::info!(
            "{} epoch {epoch}: train_loss {:.4} val_loss {:.4} val_acc {:.4}",
            model.spec().name,
            record.train_loss,
            record.val_loss,
            record.val_acc
        );
        if stopper.observe(epoch, val.loss) {
            best = model.clone();
        }
        on_epoch(&record)?;
        records.push(record);
        if stopper.should_stop() {
            log::info!("early stop after epoch {epoch}; best epoch {}", stopper.best_epoch());
            break;
        }
    }
    model.params().zero_grads();
    best.params().zero_grads();
    Ok(TrainOutcome { model: best, records, best_epoch: stopper.best_epoch() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stopping_sequence() {
        let losses = [1.0, 0.8, 0.9, 0.85, 0.95, 0.99];
        let mut s = EarlyStopping::new(3, 0.0);
        let mut stopped_at = None;
        for (i, &l) in losses.iter().enumerate() {
            s.observe(i + 1, l);
            if s.should_stop() {
                stopped_at = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped_at, Some(5));
        assert_eq!(s.best_epoch(), 2);
        assert_eq!(s.best_loss(), 0.8);
    }

    #[test]
    fn argmax_first_tie_wins() {
        assert_eq!(argmax(&[1.0f32, 3.0, 3.0, 0.0]), 1);
    }
}
