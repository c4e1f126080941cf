//! Adam, early stopping and the epoch loop.

mod adam;
mod config;
mod log;
mod pipeline;
mod trainer;

pub use adam::{adam_step, AdamState};
pub use config::{NumericMode, TrainConfig};
pub use log::{epoch_log, EpochRecord, LOG_HEADER};
pub use pipeline::{train_hybrid, HybridOutcome};
pub use trainer::{argmax, score_split, train, EarlyStopping, SplitScore, TrainOutcome};
