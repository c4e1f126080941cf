use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::{Real, Rng, Tensor};

/// One row of a forward shape trace. Shapes include the batch axis.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub layer: String,
    pub inputs: Vec<Vec<usize>>,
    pub output: Vec<usize>,
}

impl TraceRow {
    /// Output shape without the leading batch axis.
    pub fn sample_output(&self) -> &[usize] {
        &self.output[1..]
    }

    /// Input shapes without the leading batch axis.
    pub fn sample_inputs(&self) -> Vec<&[usize]> {
        self.inputs.iter().map(|s| &s[1..]).collect()
    }
}

/// Per-call forward state: train/eval mode, the dropout stream and an
/// optional shape trace.
pub struct ForwardCtx {
    training: bool,
    rng: Rng,
    trace: Option<Vec<TraceRow>>,
}

impl ForwardCtx {
    pub fn eval() -> Self {
        ForwardCtx { training: false, rng: Rng::new(0), trace: None }
    }

    /// Training mode; dropout masks are drawn from `seed`.
    pub fn train(seed: u64) -> Self {
        ForwardCtx { training: true, rng: Rng::new(seed), trace: None }
    }

    pub fn traced(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn training(&self) -> bool {
        self.training
    }

    pub fn take_trace(&mut self) -> Vec<TraceRow> {
        self.trace.take().unwrap_or_default()
    }

    pub(crate) fn record(&mut self, layer: impl Into<String>, input: &[usize], output: &[usize]) {
        self.record_many(layer, &[input], output);
    }

    pub(crate) fn record_many(&mut self, layer: impl Into<String>, inputs: &[&[usize]], output: &[usize]) {
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceRow {
                layer: layer.into(),
                inputs: inputs.iter().map(|s| s.to_vec()).collect(),
                output: output.to_vec(),
            });
        }
    }

    pub(crate) fn dropout<T: Real>(&mut self, x: &Tensor<T>, rate: f64) -> Result<Tensor<T>> {
        x.dropout(rate, &mut self.rng, self.training)
    }
}
