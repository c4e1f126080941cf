use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{mix_seed, no_grad, Real, Rng, Tensor};

use super::cnn::CnnNet;
use super::hybrid::HybridNet;
use super::params::{Builder, Init, ParamStore};
use super::resnet::ResNet;
use super::spec::{ArchName, ArchSpec};
use super::trace::{ForwardCtx, TraceRow};
use super::vit::VitNet;

#[derive(Clone, Debug)]
pub(crate) enum Net {
    Cnn(CnnNet),
    Vit(VitNet),
    Resnet(ResNet),
    Hybrid(HybridNet),
}

/// An architecture instance: its spec, named parameters and layer plan.
#[derive(Clone, Debug)]
pub struct ModelGraph<T: Real = f32> {
    spec: ArchSpec,
    params: ParamStore<T>,
    net: Net,
}

/// Penultimate features of one image.
#[derive(Clone, Debug)]
pub struct FeatureVector<T: Real = f32> {
    pub source: ArchName,
    pub values: Tensor<T>,
}

impl<T: Real> FeatureVector<T> {
    pub fn len(&self) -> usize {
        self.values.numel()
    }

    pub fn is_empty(&self) -> bool {
        self.values.numel() == 0
    }
}

/// Parameter counts per tensor, plus totals.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCounts {
    pub tensors: Vec<(String, usize)>,
    pub total: usize,
    pub trainable: usize,
}

impl ParamCounts {
    /// Sum over the tensors of one layer, e.g. `blocks.0.attn.qkv`.
    pub fn layer(&self, prefix: &str) -> usize {
        self.tensors
            .iter()
            .filter(|(n, _)| n.strip_prefix(prefix).is_some_and(|rest| rest.is_empty() || rest.starts_with('.')))
            .map(|(_, c)| c)
            .sum()
    }

    /// Counts grouped by layer (tensor name minus its last segment).
    pub fn by_layer(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for (name, c) in &self.tensors {
            let layer = name.rsplit_once('.').map_or(name.as_str(), |(l, _)| l);
            *out.entry(layer.to_string()).or_insert(0) += c;
        }
        out
    }
}

fn expect_name(spec: &ArchSpec, name: ArchName) -> Result<()> {
    if spec.name != name {
        return Err(Error::Config(format!("expected a {} spec, got {}", name, spec.name)));
    }
    spec.validate()
}

impl<T: Real> ModelGraph<T> {
    /// Randomly initialised model for any architecture. A hybrid gets fresh
    /// random branches.
    pub fn build(spec: &ArchSpec, seed: u64) -> Result<Self> {
        match spec.name {
            ArchName::Cnn => Self::build_cnn(spec, seed),
            ArchName::Vit => Self::build_vit(spec, seed),
            ArchName::Resnet50 => Self::build_resnet50(spec, seed),
            ArchName::Hybrid => {
                spec.validate()?;
                let cnn = Self::build_cnn(&spec.branch(ArchName::Cnn), mix_seed(seed, 1))?;
                let vit = Self::build_vit(&spec.branch(ArchName::Vit), mix_seed(seed, 2))?;
                Self::build_hybrid(&cnn, &vit, spec, seed)
            }
        }
    }

    pub fn build_cnn(spec: &ArchSpec, seed: u64) -> Result<Self> {
        expect_name(spec, ArchName::Cnn)?;
        let mut params = ParamStore::default();
        let mut init = Init::Random(Rng::new(seed));
        let net = CnnNet::build(&mut Builder::new(&mut params, &mut init), spec)?;
        Ok(ModelGraph { spec: spec.clone(), params, net: Net::Cnn(net) })
    }

    pub fn build_vit(spec: &ArchSpec, seed: u64) -> Result<Self> {
        expect_name(spec, ArchName::Vit)?;
        let mut params = ParamStore::default();
        let mut init = Init::Random(Rng::new(seed));
        let net = VitNet::build(&mut Builder::new(&mut params, &mut init), spec)?;
        Ok(ModelGraph { spec: spec.clone(), params, net: Net::Vit(net) })
    }

    pub fn build_resnet50(spec: &ArchSpec, seed: u64) -> Result<Self> {
        expect_name(spec, ArchName::Resnet50)?;
        let mut params = ParamStore::default();
        let mut init = Init::Random(Rng::new(seed));
        let net = ResNet::build(&mut Builder::new(&mut params, &mut init), spec)?;
        Ok(ModelGraph { spec: spec.clone(), params, net: Net::Resnet(net) })
    }

    /// Hybrid whose frozen branches are copies of `cnn` and `vit`; only the
    /// MLP is trainable and freshly initialised from `seed`.
    pub fn build_hybrid(cnn: &ModelGraph<T>, vit: &ModelGraph<T>, spec: &ArchSpec, seed: u64) -> Result<Self> {
        expect_name(spec, ArchName::Hybrid)?;
        let want_cnn = spec.branch(ArchName::Cnn);
        let want_vit = spec.branch(ArchName::Vit);
        let compatible = cnn.spec.name == ArchName::Cnn
            && vit.spec.name == ArchName::Vit
            && cnn.spec.cnn == want_cnn.cnn
            && vit.spec.vit == want_vit.vit
            && cnn.spec.num_classes == spec.num_classes
            && vit.spec.num_classes == spec.num_classes;
        if !compatible {
            return Err(Error::Config(format!(
                "hybrid branches do not match the {:?} spec: cnn features {} / vit features {} (want {} / {}), classes {} / {} (want {})",
                spec.scale,
                cnn.spec.cnn.dense,
                vit.spec.vit.feature_len(),
                spec.cnn.dense,
                spec.vit.feature_len(),
                cnn.spec.num_classes,
                vit.spec.num_classes,
                spec.num_classes
            )));
        }
        let mut graph = Self::hybrid_skeleton(spec, Init::Random(Rng::new(seed)))?;
        for (prefix, branch) in [("cnn", cnn), ("vit", vit)] {
            for p in branch.params.iter() {
                let idx = graph.params.index_of(&format!("{prefix}.{}", p.name)).expect("branch layouts agree");
                graph.params.set_data(idx, p.tensor.to_vec())?;
            }
        }
        Ok(graph)
    }

    /// Builds the hybrid layer plan; branch parameters start at zero and are frozen.
    fn hybrid_skeleton(spec: &ArchSpec, mut mlp_init: Init) -> Result<Self> {
        let mut params = ParamStore::default();
        let mut zeros = Init::Zeros;
        let (cnn, vit) = {
            let mut b = Builder::new(&mut params, &mut zeros);
            let cnn = b.scoped_frozen("cnn", |b| CnnNet::build(b, &spec.branch(ArchName::Cnn)))?;
            let vit = b.scoped_frozen("vit", |b| VitNet::build(b, &spec.branch(ArchName::Vit)))?;
            (cnn, vit)
        };
        let h = spec.hybrid.hidden;
        let mut b = Builder::new(&mut params, &mut mlp_init);
        let (fc1, fc2, head) = b.scoped("mlp", |b| {
            Ok((b.linear("fc1", spec.fused_feature_len(), h[0])?, b.linear("fc2", h[0], h[1])?, b.linear("head", h[1], spec.num_classes)?))
        })?;
        let net = HybridNet {
            cnn,
            vit,
            vit_side: spec.vit.input_side,
            fc1,
            fc2,
            head,
            activation: spec.hybrid.activation,
            alpha: spec.leaky_alpha,
            dropout: spec.dropout_rate,
        };
        Ok(ModelGraph { spec: spec.clone(), params, net: Net::Hybrid(net) })
    }

    /// Layer plan with zeroed parameters, to be filled from a checkpoint.
    pub(crate) fn skeleton(spec: &ArchSpec) -> Result<Self> {
        spec.validate()?;
        if spec.name == ArchName::Hybrid {
            return Self::hybrid_skeleton(spec, Init::Zeros);
        }
        let mut params = ParamStore::default();
        let mut init = Init::Zeros;
        let mut b = Builder::new(&mut params, &mut init);
        let net = match spec.name {
            ArchName::Cnn => Net::Cnn(CnnNet::build(&mut b, spec)?),
            ArchName::Vit => Net::Vit(VitNet::build(&mut b, spec)?),
            ArchName::Resnet50 => Net::Resnet(ResNet::build(&mut b, spec)?),
            ArchName::Hybrid => unreachable!(),
        };
        Ok(ModelGraph { spec: spec.clone(), params, net })
    }

    /// Same model with parameters converted to another precision.
    pub fn cast<U: Real>(&self) -> ModelGraph<U> {
        let mut params = ParamStore::default();
        for p in self.params.iter() {
            let t = p.tensor.cast::<U>().requires_grad_(p.tensor.requires_grad());
            params.insert(p.name.clone(), t).expect("names are already unique");
        }
        ModelGraph { spec: self.spec.clone(), params, net: self.net.clone() }
    }

    pub fn spec(&self) -> &ArchSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let s = self.spec.input_side;
        if x.ndim() != 4 || x.shape()[1] != 3 || x.shape()[2] != s || x.shape()[3] != s {
            return Err(Error::Dimension(format!(
                "{} expects input [N, 3, {s}, {s}], got {:?}",
                self.spec.name,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Pre-softmax logits `[N, num_classes]`.
    pub fn forward(&self, x: &Tensor<T>, ctx: &mut ForwardCtx) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let p = &self.params;
        match &self.net {
            Net::Cnn(n) => n.forward(p, x, ctx),
            Net::Vit(n) => n.forward(p, x, ctx),
            Net::Resnet(n) => n.forward(p, x, ctx),
            Net::Hybrid(n) => n.forward(p, x, ctx),
        }
    }

    /// Eval-mode logits without gradient tracking.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let _guard = no_grad();
        self.forward(x, &mut ForwardCtx::eval())
    }

    /// Penultimate features for a batch `[N, 3, S, S]` -> `[N, len]`.
    pub fn features(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let _guard = no_grad();
        let mut ctx = ForwardCtx::eval();
        match &self.net {
            Net::Cnn(n) => n.features(&self.params, x, &mut ctx),
            Net::Vit(n) => n.features(&self.params, x, &mut ctx),
            Net::Hybrid(n) => n.fused(&self.params, x, &mut ctx),
            Net::Resnet(_) => Err(Error::Unsupported(format!("feature extraction is defined for cnn and vit, not {}", self.spec.name))),
        }
    }

    /// Features of one `[3, S, S]` image (cnn or vit only).
    pub fn extract_features(&self, image: &Tensor<T>) -> Result<FeatureVector<T>> {
        if !matches!(self.spec.name, ArchName::Cnn | ArchName::Vit) {
            return Err(Error::Unsupported(format!("feature extraction is defined for cnn and vit, not {}", self.spec.name)));
        }
        let x = if image.ndim() == 3 {
            image.reshape(&[1, image.shape()[0], image.shape()[1], image.shape()[2]])?
        } else {
            image.clone()
        };
        let f = self.features(&x)?;
        if f.shape()[0] != 1 {
            return Err(Error::Dimension(format!("extract_features takes one image, got batch {}", f.shape()[0])));
        }
        let len = f.shape()[1];
        Ok(FeatureVector { source: self.spec.name, values: f.reshape(&[len])? })
    }

    /// MLP head of a hybrid applied to precomputed fused features.
    pub fn classify_fused(&self, fused: &Tensor<T>, ctx: &mut ForwardCtx) -> Result<Tensor<T>> {
        match &self.net {
            Net::Hybrid(n) => n.classify(&self.params, fused, ctx),
            _ => Err(Error::Unsupported(format!("{} has no fused-feature head", self.spec.name))),
        }
    }

    pub fn count_parameters(&self) -> ParamCounts {
        ParamCounts {
            tensors: self.params.iter().map(|p| (p.name.clone(), p.tensor.numel())).collect(),
            total: self.params.total(),
            trainable: self.params.trainable_total(),
        }
    }

    /// Eval-mode shape trace of one forward pass on a zero batch of `n`.
    pub fn trace(&self, n: usize) -> Result<Vec<TraceRow>> {
        let s = self.spec.input_side;
        let x = Tensor::zeros(&[n, 3, s, s]);
        let _guard = no_grad();
        let mut ctx = ForwardCtx::eval().traced();
        self.forward(&x, &mut ctx)?;
        Ok(ctx.take_trace())
    }

    /// Copies every parameter from `other`, which must share this layer plan.
    pub fn load_parameters_from(&mut self, other: &ModelGraph<T>) -> Result<()> {
        if other.spec != self.spec {
            return Err(Error::SpecMismatch(format!("cannot load {:?} parameters into {:?}", other.spec.name, self.spec.name)));
        }
        for i in 0..self.params.len() {
            self.params.set_data(i, other.params.at(i).tensor.to_vec())?;
        }
        Ok(())
    }

    /// Copies every parameter of `other` whose name and shape match one of
    /// ours, e.g. a converted pretrained backbone with a different head.
    /// Returns the names that were not imported.
    pub fn import_matching(&mut self, other: &ModelGraph<T>) -> Result<Vec<String>> {
        let mut skipped = Vec::new();
        for i in 0..self.params.len() {
            let name = self.params.at(i).name.clone();
            match other.params.by_name(&name) {
                Some(t) if t.shape() == self.params.at(i).tensor.shape() => self.params.set_data(i, t.to_vec())?,
                _ => skipped.push(name),
            }
        }
        if skipped.len() == self.params.len() {
            return Err(Error::SpecMismatch(format!("no parameter of the {} checkpoint fits this {}", other.spec.name, self.spec.name)));
        }
        Ok(skipped)
    }

    #[cfg(test)]
    pub(crate) fn resnet_block(&self, stage: usize, index: usize) -> Option<&super::resnet::Bottleneck> {
        match &self.net {
            Net::Resnet(r) => Some(r.block(stage, index)),
            _ => None,
        }
    }
}
