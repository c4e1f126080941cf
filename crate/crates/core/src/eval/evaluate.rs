use crate::data::{PreparedData, Split};
use crate::error::{Error, Result};
use crate::models::ModelGraph;
use crate::tensor::Real;
use crate::train::argmax;

use super::metrics::{confusion, Averaging, MetricsReport};
use super::task::TaskSpec;

/// Eval-mode argmax predictions for a split, in manifest order, with the true labels.
pub fn predict_split<T: Real>(model: &ModelGraph<T>, data: &PreparedData, split: Split, batch_size: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let (mut truth, mut pred) = (Vec::new(), Vec::new());
    for b in data.batches(split, batch_size, false, 0, false)? {
        let logits = model.predict(&b.pixels.cast::<T>())?;
        let k = logits.shape()[1];
        pred.extend(logits.data().chunks(k).map(argmax));
        truth.extend(b.labels);
    }
    Ok((truth, pred))
}

/// Scores `model` on one split of a prepared task dataset.
pub fn evaluate<T: Real>(
    model: &ModelGraph<T>,
    data: &PreparedData,
    task: &TaskSpec,
    split: Split,
    averaging: Averaging,
    name: &str,
) -> Result<MetricsReport> {
    if model.num_classes() != task.num_classes() || data.classes() != task.classes.as_slice() {
        return Err(Error::Config(format!(
            "model has {} classes but the {} task has {}",
            model.num_classes(),
            task,
            task.num_classes()
        )));
    }
    let (truth, pred) = predict_split(model, data, split, 32)?;
    let cm = confusion(&truth, &pred, task.num_classes())?;
    MetricsReport::new(name, task, split.as_str(), cm, averaging)
}
