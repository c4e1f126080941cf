use crate::error::Result;
use crate::tensor::ops::{multi_head_attention, AttentionWeights};
use crate::tensor::{Real, Tensor};

use super::params::{Builder, Conv, LayerNorm, Linear, ParamId, ParamStore};
use super::spec::{ArchSpec, VitDims};
use super::trace::ForwardCtx;

#[derive(Clone, Debug)]
struct Block {
    norm1: LayerNorm,
    qkv: Linear,
    proj: Linear,
    norm2: LayerNorm,
    fc1: Linear,
    fc2: Linear,
}

/// Vision transformer: patch embedding, CLS token, learned positions,
/// pre-norm encoder blocks, final norm and a linear head on the CLS token.
#[derive(Clone, Debug)]
pub(crate) struct VitNet {
    dims: VitDims,
    patch_embed: Conv,
    cls_token: ParamId,
    pos_embed: ParamId,
    blocks: Vec<Block>,
    norm: LayerNorm,
    head: Linear,
    dropout: f64,
}

impl VitNet {
    pub fn build<T: Real>(b: &mut Builder<'_, T>, spec: &ArchSpec) -> Result<Self> {
        let v = spec.vit;
        let d = v.embed_dim;
        let patch_embed = b.scoped("patch_embed", |b| b.conv("proj", 3, d, v.patch_size, v.patch_size, 0))?;
        let cls_token = b.normal("cls_token", &[1, d], 0.02)?;
        let pos_embed = b.normal("pos_embed", &[v.patch_tokens() + 1, d], 0.02)?;
        let mut blocks = Vec::with_capacity(v.depth);
        for i in 0..v.depth {
            blocks.push(b.scoped(&format!("blocks.{i}"), |b| {
                Ok(Block {
                    norm1: b.layer_norm("norm1", d)?,
                    qkv: b.linear("attn.qkv", d, 3 * d)?,
                    proj: b.linear("attn.proj", d, d)?,
                    norm2: b.layer_norm("norm2", d)?,
                    fc1: b.linear("mlp.fc1", d, v.mlp_dim)?,
                    fc2: b.linear("mlp.fc2", v.mlp_dim, d)?,
                })
            })?);
        }
        Ok(VitNet {
            dims: v,
            patch_embed,
            cls_token,
            pos_embed,
            blocks,
            norm: b.layer_norm("norm", d)?,
            head: b.linear("head", d, spec.num_classes)?,
            dropout: spec.dropout_rate,
        })
    }

    /// Token states after the final norm, `[N, patches + 1, D]`, CLS first.
    fn encode<T: Real>(&self, p: &ParamStore<T>, x: &Tensor<T>, ctx: &mut ForwardCtx) -> Result<Tensor<T>> {
        let (n, d) = (x.shape()[0], self.dims.embed_dim);
        let t = self.dims.patch_tokens();
        let grid = self.patch_embed.forward(p, x)?;
        ctx.record("patch_embed.proj", x.shape(), grid.shape());
        let tokens = grid.reshape(&[n, d, t])?.permute(&[0, 2, 1])?;
        ctx.record("patch_embed", grid.shape(), tokens.shape());
        let cls = p.get(self.cls_token).expand_leading(n)?;
        let h = Tensor::concat(&[&cls, &tokens], 1)?.add(p.get(self.pos_embed))?;
        let mut h = ctx.dropout(&h, self.dropout)?;
        ctx.record("pos_drop", tokens.shape(), h.shape());

        for (i, blk) in self.blocks.iter().enumerate() {
            let name = |s: &str| format!("blocks.{i}.{s}");
            let input = h.shape().to_vec();
            let a = blk.norm1.forward(p, &h)?;
            ctx.record(name("norm1"), &input, a.shape());
            let w = AttentionWeights {
                qkv_weight: p.get(blk.qkv.weight),
                qkv_bias: Some(p.get(blk.qkv.bias)),
                proj_weight: p.get(blk.proj.weight),
                proj_bias: Some(p.get(blk.proj.bias)),
            };
            let mut stages = Vec::new();
            let a2 = multi_head_attention(&a, self.dims.heads, &w, |stage, shape| stages.push((stage, shape.to_vec())))?;
            let mut prev = a.shape().to_vec();
            for (stage, shape) in stages {
                let label = match stage {
                    "qkv" => "attn.qkv",
                    "heads" => "attn.heads",
                    _ => {
                        // The projection consumes the heads merged back to [N, T, D].
                        prev = a.shape().to_vec();
                        "attn.proj"
                    }
                };
                ctx.record(name(label), &prev, &shape);
                prev = shape;
            }
            let a2 = ctx.dropout(&a2, self.dropout)?;
            h = h.add(&a2)?;
            ctx.record(name("attn"), a.shape(), h.shape());

            let m = blk.norm2.forward(p, &h)?;
            ctx.record(name("norm2"), h.shape(), m.shape());
            let f = blk.fc1.forward(p, &m)?;
            ctx.record(name("mlp.fc1"), m.shape(), f.shape());
            let f = f.gelu()?;
            ctx.record(name("mlp.act"), f.shape(), f.shape());
            let f = ctx.dropout(&f, self.dropout)?;
            let g = blk.fc2.forward(p, &f)?;
            ctx.record(name("mlp.fc2"), f.shape(), g.shape());
            let g = ctx.dropout(&g, self.dropout)?;
            h = h.add(&g)?;
            ctx.record(name("mlp"), m.shape(), h.shape());
            ctx.record(format!("blocks.{i}"), &input, h.shape());
        }
        let out = self.norm.forward(p, &h)?;
        ctx.record("norm", h.shape(), out.shape());
        Ok(out)
    }

    /// Patch tokens after the final norm (CLS excluded), flattened row-major.
    pub fn features<T: Real>(&self, p: &ParamStore<T>, x: &Tensor<T>, ctx: &mut ForwardCtx) -> Result<Tensor<T>> {
        let h = self.encode(p, x, ctx)?;
        let n = h.shape()[0];
        let t = self.dims.patch_tokens();
        let f = h.narrow(1, 1, t)?.reshape(&[n, t * self.dims.embed_dim])?;
        ctx.record("features", h.shape(), f.shape());
        Ok(f)
    }

    pub fn forward<T: Real>(&self, p: &ParamStore<T>, x: &Tensor<T>, ctx: &mut ForwardCtx) -> Result<Tensor<T>> {
        let h = self.encode(p, x, ctx)?;
        let n = h.shape()[0];
        let cls = h.narrow(1, 0, 1)?.reshape(&[n, self.dims.embed_dim])?;
        ctx.record("pool", h.shape(), cls.shape());
        let cls = ctx.dropout(&cls, self.dropout)?;
        let logits = self.head.forward(p, &cls)?;
        ctx.record("head", cls.shape(), logits.shape());
        Ok(logits)
    }
}
