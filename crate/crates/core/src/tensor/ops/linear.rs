use crate::error::{Error, Result};
use crate::tensor::scalar::{gemm, Mat};
use crate::tensor::tensor::{Computed, Op, Saved};
use crate::tensor::{Real, Tensor};

/// `y = x W^T + b` over the trailing axis; inputs are `[x, w]` or `[x, w, b]`.
struct Linear;

fn rows_and_dims<T: Real>(x: &Tensor<T>, w: &Tensor<T>) -> Result<(usize, usize, usize)> {
    if w.ndim() != 2 {
        return Err(Error::Dimension(format!("linear weight must be [out, in], got {:?}", w.shape())));
    }
    let (d_out, d_in) = (w.shape()[0], w.shape()[1]);
    match x.shape().last() {
        Some(&d) if d == d_in => Ok((x.numel() / d_in.max(1), d_in, d_out)),
        _ => Err(Error::Dimension(format!(
            "linear input {:?} does not end in {d_in} (weight {:?})",
            x.shape(),
            w.shape()
        ))),
    }
}

impl<T: Real> Op<T> for Linear {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Computed<T>> {
        let (x, w) = (inputs[0], inputs[1]);
        let (rows, d_in, d_out) = rows_and_dims(x, w)?;
        let mut out = vec![T::zero(); rows * d_out];
        if let Some(b) = inputs.get(2) {
            if b.shape() != [d_out] {
                return Err(Error::Dimension(format!("linear bias {:?}, expected [{d_out}]", b.shape())));
            }
            for row in out.chunks_mut(d_out) {
                row.copy_from_slice(b.data());
            }
        }
        gemm(rows, d_in, d_out, Mat::n(x.data()), Mat::t(w.data()), T::one(), &mut out);
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = d_out;
        Ok(Computed::new(shape, out))
    }

    fn backward(&self, inputs: &[&Tensor<T>], _: &Saved<T>, _: &[T], grad: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let (x, w) = (inputs[0], inputs[1]);
        let (rows, d_in, d_out) = rows_and_dims(x, w).expect("validated in forward");
        let gx = needs[0].then(|| {
            let mut g = vec![T::zero(); x.numel()];
            gemm(rows, d_out, d_in, Mat::n(grad), Mat::n(w.data()), T::zero(), &mut g);
            g
        });
        let gw = needs[1].then(|| {
            let mut g = vec![T::zero(); w.numel()];
            gemm(d_out, rows, d_in, Mat::t(grad), Mat::n(x.data()), T::zero(), &mut g);
            g
        });
        let mut out = vec![gx, gw];
        if inputs.len() > 2 {
            out.push(needs[2].then(|| {
                let mut g = vec![T::zero(); d_out];
                for row in grad.chunks(d_out) {
                    super::add_into(&mut g, row);
                }
                g
            }));
        }
        out
    }
}

impl<T: Real> Tensor<T> {
    /// Affine map over the trailing axis with weight `[d_out, d_in]`.
    pub fn linear(&self, weight: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        match bias {
            Some(b) => Tensor::apply(Linear, &[self, weight, b]),
            None => Tensor::apply(Linear, &[self, weight]),
        }
    }
}

/// Parameter count of a `d_in -> d_out` linear layer with bias.
pub fn linear_param_count(d_in: usize, d_out: usize) -> usize {
    d_out * d_in + d_out
}
