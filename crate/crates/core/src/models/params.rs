use crate::error::{Error, Result};
use crate::tensor::{Real, Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug)]
pub struct Param<T: Real> {
    pub name: String,
    pub tensor: Tensor<T>,
}

/// Ordered, uniquely named parameter tensors of a model.
#[derive(Clone, Debug)]
pub struct ParamStore<T: Real> {
    params: Vec<Param<T>>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore { params: Vec::new() }
    }
}

impl<T: Real> ParamStore<T> {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub(crate) fn insert(&mut self, name: String, tensor: Tensor<T>) -> Result<ParamId> {
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        self.params.push(Param { name, tensor });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].tensor
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.tensor)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn at(&self, index: usize) -> &Param<T> {
        &self.params[index]
    }

    /// Replaces a parameter's values, keeping its shape and trainability.
    pub fn set_data(&mut self, index: usize, data: Vec<T>) -> Result<()> {
        let p = &mut self.params[index];
        let fresh = Tensor::from_vec(data, p.tensor.shape())?.requires_grad_(p.tensor.requires_grad());
        p.tensor = fresh;
        Ok(())
    }

    /// Rewrites a parameter's values, in place when its storage is unshared.
    pub fn update(&mut self, index: usize, f: impl FnOnce(&mut [T])) -> Result<()> {
        let p = &mut self.params[index];
        let (shape, trainable) = (p.tensor.shape().to_vec(), p.tensor.requires_grad());
        let mut data = std::mem::replace(&mut p.tensor, Tensor::zeros(&[0])).into_data();
        f(&mut data);
        p.tensor = Tensor::from_vec(data, &shape)?.requires_grad_(trainable);
        Ok(())
    }

    pub fn set_trainable(&mut self, index: usize, trainable: bool) {
        let p = &mut self.params[index];
        p.tensor = p.tensor.clone().requires_grad_(trainable);
    }

    pub fn zero_grads(&self) {
        for p in &self.params {
            p.tensor.zero_grad();
        }
    }

    pub fn total(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn trainable_total(&self) -> usize {
        self.params.iter().filter(|p| p.tensor.requires_grad()).map(|p| p.tensor.numel()).sum()
    }

    /// FNV-1a over names, shapes and value bits; cheap equality witness.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= *b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for p in &self.params {
            eat(p.name.as_bytes());
            for d in p.tensor.shape() {
                eat(&d.to_le_bytes());
            }
            for v in p.tensor.data() {
                eat(&v.as_f64().to_bits().to_le_bytes());
            }
        }
        h
    }
}

/// How fresh parameters are filled.
pub(crate) enum Init {
    Random(Rng),
    /// Placeholders that will be overwritten (checkpoint loading).
    Zeros,
}

/// Registers parameters under a dotted name prefix.
pub(crate) struct Builder<'a, T: Real> {
    pub store: &'a mut ParamStore<T>,
    init: &'a mut Init,
    prefix: String,
    trainable: bool,
}

impl<'a, T: Real> Builder<'a, T> {
    pub fn new(store: &'a mut ParamStore<T>, init: &'a mut Init) -> Self {
        Builder { store, init, prefix: String::new(), trainable: true }
    }

    pub fn scoped<R>(&mut self, name: &str, f: impl FnOnce(&mut Builder<'_, T>) -> Result<R>) -> Result<R> {
        let prefix = self.qualify(name);
        let mut sub = Builder { store: &mut *self.store, init: &mut *self.init, prefix, trainable: self.trainable };
        f(&mut sub)
    }

    /// Like `scoped`, but everything registered inside is frozen.
    pub fn scoped_frozen<R>(&mut self, name: &str, f: impl FnOnce(&mut Builder<'_, T>) -> Result<R>) -> Result<R> {
        let prefix = self.qualify(name);
        let mut sub = Builder { store: &mut *self.store, init: &mut *self.init, prefix, trainable: false };
        f(&mut sub)
    }

    fn qualify(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    fn add(&mut self, name: &str, shape: &[usize], fill: impl FnMut(&mut Rng) -> f64, constant: f64) -> Result<ParamId> {
        let n: usize = shape.iter().product();
        let data: Vec<T> = match self.init {
            Init::Random(rng) => {
                let mut fill = fill;
                (0..n).map(|_| T::from_f64(fill(rng))).collect()
            }
            Init::Zeros => vec![T::from_f64(constant); n],
        };
        let tensor = Tensor::from_vec(data, shape)?.requires_grad_(self.trainable);
        self.store.insert(self.qualify(name), tensor)
    }

    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> Result<ParamId> {
        self.add(name, shape, |r| r.uniform_range(-bound, bound), 0.0)
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> Result<ParamId> {
        self.add(name, shape, |r| r.normal() * std, 0.0)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<ParamId> {
        self.add(name, shape, |_| value, value)
    }

    pub fn linear(&mut self, name: &str, d_in: usize, d_out: usize) -> Result<Linear> {
        self.scoped(name, |b| {
            let bound = 1.0 / (d_in as f64).sqrt();
            Ok(Linear { weight: b.uniform("weight", &[d_out, d_in], bound)?, bias: b.constant("bias", &[d_out], 0.0)? })
        })
    }

    pub fn conv(&mut self, name: &str, c_in: usize, c_out: usize, k: usize, stride: usize, padding: usize) -> Result<Conv> {
        self.scoped(name, |b| {
            let bound = 1.0 / ((c_in * k * k) as f64).sqrt();
            Ok(Conv {
                weight: b.uniform("weight", &[c_out, c_in, k, k], bound)?,
                bias: b.constant("bias", &[c_out], 0.0)?,
                stride,
                padding,
            })
        })
    }

    pub fn zero_conv(&mut self, name: &str, c_in: usize, c_out: usize, k: usize, stride: usize, padding: usize) -> Result<Conv> {
        self.scoped(name, |b| {
            Ok(Conv {
                weight: b.constant("weight", &[c_out, c_in, k, k], 0.0)?,
                bias: b.constant("bias", &[c_out], 0.0)?,
                stride,
                padding,
            })
        })
    }

    pub fn layer_norm(&mut self, name: &str, d: usize) -> Result<LayerNorm> {
        self.scoped(name, |b| Ok(LayerNorm { gamma: b.constant("weight", &[d], 1.0)?, beta: b.constant("bias", &[d], 0.0)? }))
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn forward<T: Real>(&self, p: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.linear(p.get(self.weight), Some(p.get(self.bias)))
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub padding: usize,
}

impl Conv {
    pub fn forward<T: Real>(&self, p: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.conv2d(p.get(self.weight), Some(p.get(self.bias)), self.stride, self.padding)
    }
}

pub(crate) const LN_EPS: f64 = 1e-6;

#[derive(Clone, Debug)]
pub(crate) struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn forward<T: Real>(&self, p: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.layer_norm(p.get(self.gamma), p.get(self.beta), LN_EPS)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut store = ParamStore::<f32>::default();
        let mut init = Init::Zeros;
        let mut b = Builder::new(&mut store, &mut init);
        b.linear("fc", 2, 3).unwrap();
        assert!(b.linear("fc", 2, 3).is_err());
        assert_eq!(store.iter().map(|p| p.name.as_str()).collect::<Vec<_>>(), ["fc.weight", "fc.bias"]);
    }

    #[test]
    fn checksum_tracks_values() {
        let mut store = ParamStore::<f32>::default();
        let mut init = Init::Random(Rng::new(1));
        Builder::new(&mut store, &mut init).linear("fc", 4, 4).unwrap();
        let before = store.checksum();
        let mut v = store.at(0).tensor.to_vec();
        v[0] += 1.0;
        store.set_data(0, v).unwrap();
        assert_ne!(before, store.checksum());
    }
}
