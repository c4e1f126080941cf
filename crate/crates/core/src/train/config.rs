use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ArchName, Scale};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NumericMode {
    F32,
    F64,
}

/// Optimiser, schedule and early-stopping settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without a validation-loss improvement before stopping.
    pub early_stop_patience: usize,
    /// Smallest validation-loss decrease that counts as an improvement.
    pub min_delta: f64,
    pub seed: u64,
    /// Per task class; computed from the train split when absent.
    pub class_weights: Option<Vec<f64>>,
    pub numeric_mode: NumericMode,
    /// Random horizontal/vertical flips of training images.
    pub augment: bool,
    /// Record elapsed seconds per epoch. Off keeps epoch logs reproducible.
    pub log_wall_clock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            epochs: 30,
            early_stop_patience: 5,
            min_delta: 0.0,
            seed: 0,
            class_weights: None,
            numeric_mode: NumericMode::F32,
            augment: false,
            log_wall_clock: false,
        }
    }
}

impl TrainConfig {
    /// Recipe for training `arch` at `scale`. For the hybrid this is the
    /// MLP stage; its branches use the cnn and vit presets.
    pub fn preset(arch: ArchName, scale: Scale) -> TrainConfig {
        let base = TrainConfig::default();
        match scale {
            Scale::Paper => TrainConfig {
                epochs: match arch {
                    ArchName::Vit => 20,
                    ArchName::Cnn | ArchName::Resnet50 | ArchName::Hybrid => 30,
                },
                ..base
            },
            Scale::Tiny => TrainConfig {
                learning_rate: match arch {
                    ArchName::Vit => 5e-4,
                    _ => 1e-3,
                },
                batch_size: 16,
                epochs: 100,
                early_stop_patience: 10,
                min_delta: 1e-4,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("{name} must be in (0,1), got {b}"));
            }
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.min_delta >= 0.0) {
            return bad(format!("min_delta must be non-negative, got {}", self.min_delta));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if let Some(w) = &self.class_weights {
            if w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return bad(format!("class weights must be positive, got {w:?}"));
            }
        }
        Ok(())
    }
}
