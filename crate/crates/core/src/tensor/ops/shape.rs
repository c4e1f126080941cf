use crate::error::{Error, Result};
use crate::tensor::tensor::{Computed, Op, Saved};
use crate::tensor::{Real, Tensor};

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

struct Reshape(Vec<usize>);

impl<T: Real> Op<T> for Reshape {
    fn name(&self) -> &'static str {
        "reshape"
    }

    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Computed<T>> {
        let x = inputs[0];
        if self.0.iter().product::<usize>() != x.numel() {
            return Err(Error::Dimension(format!("cannot reshape {:?} into {:?}", x.shape(), self.0)));
        }
        Ok(Computed::new(self.0.clone(), x.to_vec()))
    }

    fn backward(&self, _: &[&Tensor<T>], _: &Saved<T>, _: &[T], grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        vec![Some(grad.to_vec())]
    }
}

/// Gathers `src` (shape `shape`) into the axis order `perm`.
fn permute_data<T: Copy>(src: &[T], shape: &[usize], perm: &[usize]) -> (Vec<usize>, Vec<T>) {
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let in_strides = strides(shape);
    let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = Vec::with_capacity(src.len());
    let nd = out_shape.len();
    let mut idx = vec![0usize; nd];
    let mut offset = 0usize;
    for _ in 0..src.len() {
        out.push(src[offset]);
        for d in (0..nd).rev() {
            idx[d] += 1;
            offset += src_strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            offset -= src_strides[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    (out_shape, out)
}

struct Permute(Vec<usize>);

impl<T: Real> Op<T> for Permute {
    fn name(&self) -> &'static str {
        "permute"
    }

    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Computed<T>> {
        let x = inputs[0];
        let mut seen = self.0.clone();
        seen.sort_unstable();
        if seen != (0..x.ndim()).collect::<Vec<_>>() {
            return Err(Error::Dimension(format!("invalid permutation {:?} for {:?}", self.0, x.shape())));
        }
        let (shape, data) = permute_data(x.data(), x.shape(), &self.0);
        Ok(Computed::new(shape, data))
    }

    fn backward(&self, inputs: &[&Tensor<T>], _: &Saved<T>, _: &[T], grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let mut inverse = vec![0; self.0.len()];
        for (i, &p) in self.0.iter().enumerate() {
            inverse[p] = i;
        }
        let permuted: Vec<usize> = self.0.iter().map(|&p| inputs[0].shape()[p]).collect();
        let (_, g) = permute_data(grad, &permuted, &inverse);
        vec![Some(g)]
    }
}

/// Contiguous slice `[start, start + len)` along `axis`.
struct Narrow {
    axis: usize,
    start: usize,
    len: usize,
}

/// (outer, axis extent, inner) decomposition of a shape around `axis`.
fn split_at_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<T: Real> Op<T> for Narrow {
    fn name(&self) -> &'static str {
        "narrow"
    }

    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Computed<T>> {
        let x = inputs[0];
        if self.axis >= x.ndim() || self.start + self.len > x.shape()[self.axis] {
            return Err(Error::Dimension(format!(
                "narrow(axis {}, {}..{}) out of range for {:?}",
                self.axis,
                self.start,
                self.start + self.len,
                x.shape()
            )));
        }
        let (outer, extent, inner) = split_at_axis(x.shape(), self.axis);
        let mut data = Vec::with_capacity(outer * self.len * inner);
        for o in 0..outer {
            let base = (o * extent + self.start) * inner;
            data.extend_from_slice(&x.data()[base..base + self.len * inner]);
        }
        let mut shape = x.shape().to_vec();
        shape[self.axis] = self.len;
        Ok(Computed::new(shape, data))
    }

    fn backward(&self, inputs: &[&Tensor<T>], _: &Saved<T>, _: &[T], grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let x = inputs[0];
        let (outer, extent, inner) = split_at_axis(x.shape(), self.axis);
        let mut g = vec![T::zero(); x.numel()];
        let block = self.len * inner;
        for o in 0..outer {
            let base = (o * extent + self.start) * inner;
            g[base..base + block].copy_from_slice(&grad[o * block..(o + 1) * block]);
        }
        vec![Some(g)]
    }
}

struct Concat {
    axis: usize,
}

impl<T: Real> Op<T> for Concat {
    fn name(&self) -> &'static str {
        "concat"
    }

    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Computed<T>> {
        let first = inputs.first().ok_or_else(|| Error::Usage("concat of zero tensors".into()))?;
        let nd = first.ndim();
        if self.axis >= nd {
            return Err(Error::Dimension(format!("concat axis {} for rank {nd}", self.axis)));
        }
        for t in inputs {
            let ok = t.ndim() == nd
                && (0..nd).all(|d| d == self.axis || t.shape()[d] == first.shape()[d]);
            if !ok {
                return Err(Error::Dimension(format!(
                    "concat along axis {}: {:?} vs {:?}",
                    self.axis,
                    first.shape(),
                    t.shape()
                )));
            }
        }
        let (outer, _, inner) = split_at_axis(first.shape(), self.axis);
        let total: usize = inputs.iter().map(|t| t.shape()[self.axis]).sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for t in inputs {
                let block = t.shape()[self.axis] * inner;
                data.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
            }
        }
        let mut shape = first.shape().to_vec();
        shape[self.axis] = total;
        Ok(Computed::new(shape, data))
    }

    fn backward(&self, inputs: &[&Tensor<T>], _: &Saved<T>, _: &[T], grad: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let (outer, _, inner) = split_at_axis(inputs[0].shape(), self.axis);
        let total: usize = inputs.iter().map(|t| t.shape()[self.axis]).sum();
        let mut grads = Vec::with_capacity(inputs.len());
        let mut offset = 0;
        for (t, &need) in inputs.iter().zip(needs) {
            let block = t.shape()[self.axis] * inner;
            if need {
                let mut g = Vec::with_capacity(t.numel());
                for o in 0..outer {
                    let base = o * total * inner + offset;
                    g.extend_from_slice(&grad[base..base + block]);
                }
                grads.push(Some(g));
            } else {
                grads.push(None);
            }
            offset += block;
        }
        grads
    }
}

/// Repeats the tensor `n` times along a new leading axis.
struct Expand(usize);

impl<T: Real> Op<T> for Expand {
    fn name(&self) -> &'static str {
        "expand"
    }

    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Computed<T>> {
        let x = inputs[0];
        let mut shape = vec![self.0];
        shape.extend_from_slice(x.shape());
        let mut data = Vec::with_capacity(self.0 * x.numel());
        for _ in 0..self.0 {
            data.extend_from_slice(x.data());
        }
        Ok(Computed::new(shape, data))
    }

    fn backward(&self, inputs: &[&Tensor<T>], _: &Saved<T>, _: &[T], grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let mut g = vec![T::zero(); inputs[0].numel()];
        for chunk in grad.chunks(inputs[0].numel().max(1)) {
            super::add_into(&mut g, chunk);
        }
        vec![Some(g)]
    }
}

impl<T: Real> Tensor<T> {
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        if shape == self.shape() {
            return Ok(self.clone());
        }
        Tensor::apply(Reshape(shape.to_vec()), &[self])
    }

    /// Collapses everything after the first axis: `[N, ...] -> [N, prod(...)]`.
    pub fn flatten(&self) -> Result<Tensor<T>> {
        match self.shape().first() {
            Some(&n) => self.reshape(&[n, self.numel() / n.max(1)]),
            None => self.reshape(&[1]),
        }
    }

    pub fn permute(&self, perm: &[usize]) -> Result<Tensor<T>> {
        Tensor::apply(Permute(perm.to_vec()), &[self])
    }

    pub fn transpose(&self, a: usize, b: usize) -> Result<Tensor<T>> {
        let mut perm: Vec<usize> = (0..self.ndim()).collect();
        if a >= perm.len() || b >= perm.len() {
            return Err(Error::Dimension(format!("transpose({a},{b}) for {:?}", self.shape())));
        }
        perm.swap(a, b);
        self.permute(&perm)
    }

    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor<T>> {
        Tensor::apply(Narrow { axis, start, len }, &[self])
    }

    pub fn concat(tensors: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
        Tensor::apply(Concat { axis }, tensors)
    }

    pub fn expand_leading(&self, n: usize) -> Result<Tensor<T>> {
        Tensor::apply(Expand(n), &[self])
    }
}
