use crate::error::{Error, Result};
use crate::tensor::tensor::{Computed, Op, Saved};
use crate::tensor::{Real, Tensor};

/// Layer normalisation over the trailing axis with affine `gamma`, `beta`.
/// Saves the normalised values and the reciprocal standard deviation per row.
struct LayerNorm {
    eps: f64,
}

impl<T: Real> Op<T> for LayerNorm {
    fn name(&self) -> &'static str {
        "layer_norm"
    }

    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Computed<T>> {
        let (x, gamma, beta) = (inputs[0], inputs[1], inputs[2]);
        let d = *x.shape().last().ok_or_else(|| Error::Dimension("layer_norm of a scalar".into()))?;
        if gamma.shape() != [d] || beta.shape() != [d] {
            return Err(Error::Dimension(format!(
                "layer_norm over {:?} needs gamma/beta of [{d}], got {:?}/{:?}",
                x.shape(),
                gamma.shape(),
                beta.shape()
            )));
        }
        let inv_d = T::from_f64(1.0 / d as f64);
        let eps = T::from_f64(self.eps);
        let mut out = Vec::with_capacity(x.numel());
        let mut xhat = Vec::with_capacity(x.numel());
        let mut rstd = Vec::with_capacity(x.numel() / d.max(1));
        for row in x.data().chunks(d) {
            let mean = row.iter().fold(T::zero(), |a, &b| a + b) * inv_d;
            let var = row.iter().fold(T::zero(), |a, &b| a + (b - mean) * (b - mean)) * inv_d;
            let r = T::one() / (var + eps).sqrt();
            rstd.push(r);
            for ((&v, &g), &b) in row.iter().zip(gamma.data()).zip(beta.data()) {
                let n = (v - mean) * r;
                xhat.push(n);
                out.push(n * g + b);
            }
        }
        let saved = Saved { values: vec![xhat, rstd], indices: vec![] };
        Ok(Computed::new(x.shape().to_vec(), out).with_saved(saved))
    }

    fn backward(&self, inputs: &[&Tensor<T>], saved: &Saved<T>, _: &[T], grad: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let gamma = inputs[1].data();
        let d = gamma.len();
        let (xhat, rstd) = (&saved.values[0], &saved.values[1]);
        let mut gx = needs[0].then(|| vec![T::zero(); grad.len()]);
        let mut gg = vec![T::zero(); d];
        let mut gb = vec![T::zero(); d];
        let inv_d = T::from_f64(1.0 / d as f64);
        for (r, (g_row, xh)) in grad.chunks(d).zip(xhat.chunks(d)).enumerate() {
            let mut sum_dxh = T::zero();
            let mut sum_dxh_xh = T::zero();
            for i in 0..d {
                gg[i] = gg[i] + g_row[i] * xh[i];
                gb[i] = gb[i] + g_row[i];
                let dxh = g_row[i] * gamma[i];
                sum_dxh = sum_dxh + dxh;
                sum_dxh_xh = sum_dxh_xh + dxh * xh[i];
            }
            if let Some(gx) = gx.as_mut() {
                let dst = &mut gx[r * d..(r + 1) * d];
                for i in 0..d {
                    let dxh = g_row[i] * gamma[i];
                    dst[i] = rstd[r] * (dxh - inv_d * sum_dxh - xh[i] * inv_d * sum_dxh_xh);
                }
            }
        }
        vec![gx, needs[1].then_some(gg), needs[2].then_some(gb)]
    }
}

impl<T: Real> Tensor<T> {
    pub fn layer_norm(&self, gamma: &Tensor<T>, beta: &Tensor<T>, eps: f64) -> Result<Tensor<T>> {
        if eps <= 0.0 {
            return Err(Error::Config(format!("layer_norm eps must be positive, got {eps}")));
        }
        Tensor::apply(LayerNorm { eps }, &[self, gamma, beta])
    }
}
