use crate::error::Result;
use crate::tensor::{Real, Tensor};

use super::params::{Builder, Conv, Linear, ParamStore};
use super::spec::ArchSpec;
use super::trace::ForwardCtx;

/// Three conv blocks (`[conv3x3 -> LeakyReLU] x2 -> maxpool 2x2`), global
/// average pooling, two dense layers with LeakyReLU, and a linear head.
#[derive(Clone, Debug)]
pub(crate) struct CnnNet {
    blocks: Vec<(Conv, Conv)>,
    dense1: Linear,
    dense2: Linear,
    head: Linear,
    alpha: f64,
    dropout: f64,
}

impl CnnNet {
    pub fn build<T: Real>(b: &mut Builder<'_, T>, spec: &ArchSpec) -> Result<Self> {
        let mut c_in = 3;
        let mut blocks = Vec::new();
        for (i, &f) in spec.cnn.filters.iter().enumerate() {
            let block = b.scoped(&format!("block{}", i + 1), |b| {
                Ok((b.conv("conv1", c_in, f, 3, 1, 1)?, b.conv("conv2", f, f, 3, 1, 1)?))
            })?;
            blocks.push(block);
            c_in = f;
        }
        let d = spec.cnn.dense;
        Ok(CnnNet {
            blocks,
            dense1: b.linear("dense1", c_in, d)?,
            dense2: b.linear("dense2", d, d)?,
            head: b.linear("head", d, spec.num_classes)?,
            alpha: spec.leaky_alpha,
            dropout: spec.dropout_rate,
        })
    }

    /// Activations of the second dense layer (post-LeakyReLU), `[N, dense]`.
    pub fn features<T: Real>(&self, p: &ParamStore<T>, x: &Tensor<T>, ctx: &mut ForwardCtx) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for (i, (c1, c2)) in self.blocks.iter().enumerate() {
            let input = h.shape().to_vec();
            let a = c1.forward(p, &h)?.leaky_relu(self.alpha)?;
            ctx.record(format!("block{}.conv1", i + 1), &input, a.shape());
            let mid = a.shape().to_vec();
            let a = c2.forward(p, &a)?.leaky_relu(self.alpha)?;
            ctx.record(format!("block{}.conv2", i + 1), &mid, a.shape());
            h = a.maxpool2d(2, 2, 0)?;
            ctx.record(format!("block{}.pool", i + 1), a.shape(), h.shape());
        }
        let g = h.global_avg_pool()?;
        ctx.record("gap", h.shape(), g.shape());
        let d1 = self.dense1.forward(p, &g)?.leaky_relu(self.alpha)?;
        ctx.record("dense1", g.shape(), d1.shape());
        let d1 = ctx.dropout(&d1, self.dropout)?;
        let d2 = self.dense2.forward(p, &d1)?.leaky_relu(self.alpha)?;
        ctx.record("dense2", d1.shape(), d2.shape());
        Ok(d2)
    }

    pub fn forward<T: Real>(&self, p: &ParamStore<T>, x: &Tensor<T>, ctx: &mut ForwardCtx) -> Result<Tensor<T>> {
        let f = self.features(p, x, ctx)?;
        let f = ctx.dropout(&f, self.dropout)?;
        let logits = self.head.forward(p, &f)?;
        ctx.record("head", f.shape(), logits.shape());
        Ok(logits)
    }
}
