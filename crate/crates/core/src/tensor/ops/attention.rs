use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Parameters of one multi-head self-attention layer.
pub struct AttentionWeights<'a, T: Real> {
    /// `[3D, D]`, rows ordered as (query, key, value) blocks.
    pub qkv_weight: &'a Tensor<T>,
    pub qkv_bias: Option<&'a Tensor<T>>,
    pub proj_weight: &'a Tensor<T>,
    pub proj_bias: Option<&'a Tensor<T>>,
}

/// Multi-head self-attention over `[T, D]` or `[B, T, D]` tokens.
///
/// Per head: `softmax(Q K^T / sqrt(D / heads)) V`; heads are concatenated and
/// projected back to `D`. `observe` sees each intermediate by stage name
/// (`"qkv"`, `"heads"`, `"proj"`) and its shape; models use it for shape traces.
pub fn multi_head_attention<T: Real>(
    tokens: &Tensor<T>,
    heads: usize,
    w: &AttentionWeights<'_, T>,
    mut observe: impl FnMut(&'static str, &[usize]),
) -> Result<Tensor<T>> {
    let unbatched = tokens.ndim() == 2;
    let x = if unbatched {
        tokens.reshape(&[1, tokens.shape()[0], tokens.shape()[1]])?
    } else if tokens.ndim() == 3 {
        tokens.clone()
    } else {
        return Err(Error::Dimension(format!("attention expects [T, D] or [B, T, D], got {:?}", tokens.shape())));
    };
    let (b, t, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if heads == 0 || d % heads != 0 {
        return Err(Error::Config(format!("embedding width {d} is not divisible by {heads} heads")));
    }
    let dh = d / heads;

    let qkv = x.linear(w.qkv_weight, w.qkv_bias)?; // [B, T, 3D]
    observe("qkv", qkv.shape());
    let qkv = qkv.reshape(&[b, t, 3, heads, dh])?.permute(&[2, 0, 3, 1, 4])?; // [3, B, H, T, dh]
    observe("heads", &qkv.shape()[1..]);
    let pick = |i: usize| -> Result<Tensor<T>> { qkv.narrow(0, i, 1)?.reshape(&[b * heads, t, dh]) };
    let (q, k, v) = (pick(0)?, pick(1)?, pick(2)?);

    let scores = q.matmul_t(&k)?.scale(1.0 / (dh as f64).sqrt())?; // [BH, T, T]
    let attn = scores.softmax()?;
    let ctx = attn.matmul(&v)?; // [BH, T, dh]
    let ctx = ctx.reshape(&[b, heads, t, dh])?.permute(&[0, 2, 1, 3])?.reshape(&[b, t, d])?;
    let out = ctx.linear(w.proj_weight, w.proj_bias)?;
    observe("proj", out.shape());
    if unbatched {
        out.reshape(&[t, d])
    } else {
        Ok(out)
    }
}
