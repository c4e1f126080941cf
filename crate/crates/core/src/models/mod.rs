//! The four classifiers and their checkpoint format.
//!
//! Every model is a [`ModelGraph`]: an [`ArchSpec`], a [`ParamStore`] of
//! uniquely named tensors and a fixed layer plan. Inputs are `[N, 3, S, S]`
//! batches; outputs are pre-softmax logits.

pub mod checkpoint;
mod cnn;
mod graph;
mod hybrid;
mod params;
mod resnet;
mod spec;
mod trace;
mod vit;

pub use checkpoint::{Checkpoint, RunInfo};
pub use graph::{FeatureVector, ModelGraph, ParamCounts};
pub use params::{Param, ParamId, ParamStore};
pub use spec::{ArchName, ArchSpec, CnnDims, HybridDims, MlpActivation, ResNetDims, Scale, VitDims};
pub use trace::{ForwardCtx, TraceRow};
