use crate::error::Result;
use crate::tensor::{Real, Tensor};

use super::params::{Builder, Conv, Linear, ParamStore};
use super::spec::ArchSpec;
use super::trace::ForwardCtx;

pub(crate) const EXPANSION: usize = 4;

/// 1x1 -> 3x3 -> 1x1 residual unit with 4x channel expansion.
#[derive(Clone, Debug)]
pub(crate) struct Bottleneck {
    conv1: Conv,
    conv2: Conv,
    conv3: Conv,
    downsample: Option<Conv>,
}

impl Bottleneck {
    fn build<T: Real>(b: &mut Builder<'_, T>, c_in: usize, width: usize, stride: usize, zero_last: bool) -> Result<Self> {
        let c_out = width * EXPANSION;
        let conv1 = b.conv("conv1", c_in, width, 1, 1, 0)?;
        let conv2 = b.conv("conv2", width, width, 3, stride, 1)?;
        let conv3 = if zero_last { b.zero_conv("conv3", width, c_out, 1, 1, 0)? } else { b.conv("conv3", width, c_out, 1, 1, 0)? };
        let downsample = if stride != 1 || c_in != c_out { Some(b.conv("downsample", c_in, c_out, 1, stride, 0)?) } else { None };
        Ok(Bottleneck { conv1, conv2, conv3, downsample })
    }

    pub fn forward<T: Real>(&self, p: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let h = self.conv1.forward(p, x)?.relu()?;
        let h = self.conv2.forward(p, &h)?.relu()?;
        let h = self.conv3.forward(p, &h)?;
        let shortcut = match &self.downsample {
            Some(d) => d.forward(p, x)?,
            None => x.clone(),
        };
        h.add(&shortcut)?.relu()
    }
}

/// ResNet-50 style network: 7x7/2 stem, 3x3/2 max pool, four bottleneck
/// stages, global average pooling and a linear head.
#[derive(Clone, Debug)]
pub(crate) struct ResNet {
    stem: Conv,
    stages: Vec<Vec<Bottleneck>>,
    fc: Linear,
}

impl ResNet {
    pub fn build<T: Real>(b: &mut Builder<'_, T>, spec: &ArchSpec) -> Result<Self> {
        let r = spec.resnet;
        let stem = b.conv("conv1", 3, r.stem_width, 7, 2, 3)?;
        let mut c_in = r.stem_width;
        let mut stages = Vec::with_capacity(4);
        for (s, (&n, &width)) in r.blocks.iter().zip(&r.widths).enumerate() {
            let mut blocks = Vec::with_capacity(n);
            for i in 0..n {
                let stride = if i == 0 && s > 0 { 2 } else { 1 };
                let block = b.scoped(&format!("layer{}.{i}", s + 1), |b| {
                    Bottleneck::build(b, c_in, width, stride, r.zero_init_residual)
                })?;
                blocks.push(block);
                c_in = width * EXPANSION;
            }
            stages.push(blocks);
        }
        Ok(ResNet { stem, stages, fc: b.linear("fc", c_in, spec.num_classes)? })
    }

    pub fn forward<T: Real>(&self, p: &ParamStore<T>, x: &Tensor<T>, ctx: &mut ForwardCtx) -> Result<Tensor<T>> {
        let h = self.stem.forward(p, x)?.relu()?;
        ctx.record("conv1", x.shape(), h.shape());
        let mut cur = h.maxpool2d(3, 2, 1)?;
        ctx.record("maxpool", h.shape(), cur.shape());
        for (s, blocks) in self.stages.iter().enumerate() {
            let input = cur.shape().to_vec();
            for block in blocks {
                cur = block.forward(p, &cur)?;
            }
            ctx.record(format!("layer{}", s + 1), &input, cur.shape());
        }
        let g = cur.global_avg_pool()?;
        ctx.record("gap", cur.shape(), g.shape());
        let logits = self.fc.forward(p, &g)?;
        ctx.record("fc", g.shape(), logits.shape());
        Ok(logits)
    }

    #[cfg(test)]
    pub fn block(&self, stage: usize, index: usize) -> &Bottleneck {
        &self.stages[stage][index]
    }
}
