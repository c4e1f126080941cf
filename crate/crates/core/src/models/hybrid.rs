use crate::error::Result;
use crate::tensor::{no_grad, Real, Tensor};

use super::cnn::CnnNet;
use super::params::{Linear, ParamStore};
use super::spec::MlpActivation;
use super::trace::ForwardCtx;
use super::vit::VitNet;

/// Frozen CNN and ViT feature extractors whose concatenated features feed
/// a three-layer MLP.
#[derive(Clone, Debug)]
pub(crate) struct HybridNet {
    pub cnn: CnnNet,
    pub vit: VitNet,
    pub vit_side: usize,
    pub fc1: Linear,
    pub fc2: Linear,
    pub head: Linear,
    pub activation: MlpActivation,
    pub alpha: f64,
    pub dropout: f64,
}

impl HybridNet {
    /// Concatenated branch features, `[N, cnn + vit]`. Branches always run
    /// in eval mode without gradient tracking.
    pub fn fused<T: Real>(&self, p: &ParamStore<T>, x: &Tensor<T>, ctx: &mut ForwardCtx) -> Result<Tensor<T>> {
        let _guard = no_grad();
        let mut branch = ForwardCtx::eval();
        let c = self.cnn.features(p, x, &mut branch)?;
        ctx.record("cnn", x.shape(), c.shape());
        let side = x.shape()[2];
        let xv = if side == self.vit_side { x.clone() } else { x.resize_bilinear(self.vit_side, self.vit_side)? };
        let v = self.vit.features(p, &xv, &mut branch)?;
        ctx.record("vit", x.shape(), v.shape());
        let f = Tensor::concat(&[&c, &v], 1)?;
        ctx.record_many("concat", &[c.shape(), v.shape()], f.shape());
        Ok(f)
    }

    fn act<T: Real>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self.activation {
            MlpActivation::Relu => x.relu(),
            MlpActivation::LeakyRelu => x.leaky_relu(self.alpha),
        }
    }

    /// MLP classifier over precomputed fused features.
    pub fn classify<T: Real>(&self, p: &ParamStore<T>, f: &Tensor<T>, ctx: &mut ForwardCtx) -> Result<Tensor<T>> {
        let h1 = self.act(&self.fc1.forward(p, f)?)?;
        ctx.record("mlp.fc1", f.shape(), h1.shape());
        let h1 = ctx.dropout(&h1, self.dropout)?;
        let h2 = self.act(&self.fc2.forward(p, &h1)?)?;
        ctx.record("mlp.fc2", h1.shape(), h2.shape());
        let h2 = ctx.dropout(&h2, self.dropout)?;
        let logits = self.head.forward(p, &h2)?;
        ctx.record("mlp.head", h2.shape(), logits.shape());
        Ok(logits)
    }

    pub fn forward<T: Real>(&self, p: &ParamStore<T>, x: &Tensor<T>, ctx: &mut ForwardCtx) -> Result<Tensor<T>> {
        let f = self.fused(p, x, ctx)?;
        self.classify(p, &f, ctx)
    }
}
