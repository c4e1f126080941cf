//! Confusion matrices, accuracy/precision/recall/F1, result tables and charts.

mod evaluate;
mod metrics;
mod report;
mod task;

pub use evaluate::{evaluate, predict_split};
pub use metrics::{binary_scores, confusion, metrics, Averaging, BinaryCounts, ClassScores, ConfusionMatrix, MetricsReport, Scores};
pub use report::{emit_chart, emit_table, render_chart, TableFormat, TABLE_HEADER};
pub use task::{TaskKind, TaskSpec};
