use crate::data::PreparedData;
use crate::error::Result;
use crate::models::{ArchName, ArchSpec, ModelGraph};
use crate::tensor::{mix_seed, Real};

use super::config::TrainConfig;
use super::log::EpochRecord;
use super::trainer::{train, TrainOutcome};

/// Everything produced by two-stage hybrid training. `branches` holds the
/// CNN and ViT runs when they were trained here rather than supplied.
#[derive(Clone, Debug)]
pub struct HybridOutcome<T: Real> {
    pub branches: Option<(TrainOutcome<T>, TrainOutcome<T>)>,
    pub hybrid: TrainOutcome<T>,
}

/// Trains the CNN and ViT as classifiers (unless `branches` are given),
/// the ViT on inputs resampled to its own side as inside the hybrid, then
/// freezes both and trains the fusion MLP. `on_epoch` receives the stage
/// being trained with every record.
pub fn train_hybrid<T: Real>(
    spec: &ArchSpec,
    data: &PreparedData,
    branch_cfgs: (&TrainConfig, &TrainConfig),
    mlp_cfg: &TrainConfig,
    weights: &[f64],
    branches: Option<(ModelGraph<T>, ModelGraph<T>)>,
    mut on_epoch: impl FnMut(ArchName, &EpochRecord) -> Result<()>,
) -> Result<HybridOutcome<T>> {
    let (hybrid, trained) = match branches {
        // Supplied branches are dropped once copied into the hybrid.
        Some((cnn, vit)) => (ModelGraph::build_hybrid(&cnn, &vit, spec, mix_seed(mlp_cfg.seed, 7))?, None),
        None => {
            let mut stage = |name: ArchName, cfg: &TrainConfig| -> Result<TrainOutcome<T>> {
                let branch = spec.branch(name);
                let model = ModelGraph::build(&branch, mix_seed(cfg.seed, name as u64 + 1))?;
                if branch.input_side == data.side() {
                    train(model, data, cfg, weights, |r| on_epoch(name, r))
                } else {
                    train(model, &data.resampled(branch.input_side)?, cfg, weights, |r| on_epoch(name, r))
                }
            };
            let c = stage(ArchName::Cnn, branch_cfgs.0)?;
            let v = stage(ArchName::Vit, branch_cfgs.1)?;
            (ModelGraph::build_hybrid(&c.model, &v.model, spec, mix_seed(mlp_cfg.seed, 7))?, Some((c, v)))
        }
    };
    let hybrid = train(hybrid, data, mlp_cfg, weights, |r| on_epoch(ArchName::Hybrid, r))?;
    Ok(HybridOutcome { branches: trained, hybrid })
}
