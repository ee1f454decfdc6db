//! Multi-head scaled dot-product self-attention with a key padding mask.

use crate::error::{Error, Result};

use super::ops::{linear, linear_backward, softmax_rows, softmax_rows_backward};
use super::tensor::Tensor;

/// Additive bias pushed onto masked key scores before the softmax. Finite
/// (rather than -inf) so the backward pass stays NaN-free; the masked
/// softmax then zeroes those weights exactly.
pub const MASK_BIAS: f64 = -1e9;

/// Borrowed projection parameters for one attention block.
pub struct AttentionParams<'a> {
    pub wq: &'a Tensor,
    pub bq: &'a Tensor,
    pub wk: &'a Tensor,
    pub bk: &'a Tensor,
    pub wv: &'a Tensor,
    pub bv: &'a Tensor,
    pub wo: &'a Tensor,
    pub bo: &'a Tensor,
}

/// Mutable gradient slots matching [`AttentionParams`].
pub struct AttentionGrads<'a> {
    pub wq: &'a mut Tensor,
    pub bq: &'a mut Tensor,
    pub wk: &'a mut Tensor,
    pub bk: &'a mut Tensor,
    pub wv: &'a mut Tensor,
    pub bv: &'a mut Tensor,
    pub wo: &'a mut Tensor,
    pub bo: &'a mut Tensor,
}

/// Forward activations needed by the backward pass.
pub struct AttentionCache {
    q: Tensor,
    k: Tensor,
    v: Tensor,
    /// Attention weights, `[batch * heads * L, L]` row-major.
    probs: Tensor,
    /// Head outputs concatenated back to `[batch * L, d]`, before the output
    /// projection.
    context: Tensor,
    n_heads: usize,
}

fn head_slice(src: &Tensor, b: usize, seq_len: usize, head: usize, dh: usize) -> Tensor {
    let mut out = Tensor::zeros(&[seq_len, dh]);
    for t in 0..seq_len {
        let row = src.row(b * seq_len + t);
        out.row_mut(t)
            .copy_from_slice(&row[head * dh..(head + 1) * dh]);
    }
    out
}

fn head_scatter_add(
    dst: &mut Tensor,
    src: &Tensor,
    b: usize,
    seq_len: usize,
    head: usize,
    dh: usize,
) {
    for t in 0..seq_len {
        let drow = dst.row_mut(b * seq_len + t);
        let srow = src.row(t);
        for (g, &v) in drow[head * dh..(head + 1) * dh].iter_mut().zip(srow) {
            *g += v;
        }
    }
}

/// Self-attention over `x` shaped `[batch, seq_len, d]` (given flattened as
/// `[batch * seq_len, d]`). `mask` has one entry per token; masked keys are
/// biased by [`MASK_BIAS`] and excluded from the softmax.
pub fn multi_head_attention(
    x: &Tensor,
    batch: usize,
    seq_len: usize,
    mask: &[u8],
    params: &AttentionParams,
    n_heads: usize,
) -> Result<(Tensor, AttentionCache)> {
    let d = x.cols();
    if !d.is_multiple_of(n_heads) {
        return Err(Error::Config(format!(
            "d_model {d} not divisible by {n_heads} heads"
        )));
    }
    if x.rows() != batch * seq_len || mask.len() != batch * seq_len {
        return Err(Error::Dim(format!(
            "attention: x rows {} / mask {} vs batch {batch} x seq {seq_len}",
            x.rows(),
            mask.len()
        )));
    }
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let q = linear(x, params.wq, params.bq)?;
    let k = linear(x, params.wk, params.bk)?;
    let v = linear(x, params.wv, params.bv)?;

    let mut probs = Tensor::zeros(&[batch * n_heads * seq_len, seq_len]);
    let mut context = Tensor::zeros(&[batch * seq_len, d]);
    for b in 0..batch {
        let key_mask = &mask[b * seq_len..(b + 1) * seq_len];
        // every query row shares the batch row's key mask
        let mut sm_mask = vec![0u8; seq_len * seq_len];
        for i in 0..seq_len {
            sm_mask[i * seq_len..(i + 1) * seq_len].copy_from_slice(key_mask);
        }
        for h in 0..n_heads {
            let qh = head_slice(&q, b, seq_len, h, dh);
            let kh = head_slice(&k, b, seq_len, h, dh);
            let vh = head_slice(&v, b, seq_len, h, dh);
            let mut scores = qh.matmul_nt(&kh)?;
            scores.scale(scale);
            for i in 0..seq_len {
                for j in 0..seq_len {
                    if key_mask[j] == 0 {
                        scores.data_mut()[i * seq_len + j] += MASK_BIAS;
                    }
                }
            }
            let attn = softmax_rows(&scores, Some(&sm_mask))?;
            let ctx = attn.matmul(&vh)?;
            let base = (b * n_heads + h) * seq_len;
            for i in 0..seq_len {
                probs.row_mut(base + i).copy_from_slice(attn.row(i));
            }
            head_scatter_add(&mut context, &ctx, b, seq_len, h, dh);
        }
    }

    let out = linear(&context, params.wo, params.bo)?;
    Ok((
        out,
        AttentionCache {
            q,
            k,
            v,
            probs,
            context,
            n_heads,
        },
    ))
}

/// Backward of [`multi_head_attention`]; accumulates parameter gradients and
/// returns the gradient with respect to `x`.
#[allow(clippy::too_many_arguments)]
pub fn multi_head_attention_backward(
    x: &Tensor,
    batch: usize,
    seq_len: usize,
    mask: &[u8],
    params: &AttentionParams,
    cache: &AttentionCache,
    dy: &Tensor,
    grads: &mut AttentionGrads,
) -> Result<Tensor> {
    let d = x.cols();
    let n_heads = cache.n_heads;
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let dcontext = linear_backward(&cache.context, params.wo, dy, grads.wo, grads.bo)?;

    let mut dq = Tensor::zeros(&[batch * seq_len, d]);
    let mut dk = Tensor::zeros(&[batch * seq_len, d]);
    let mut dv = Tensor::zeros(&[batch * seq_len, d]);
    for b in 0..batch {
        let key_mask = &mask[b * seq_len..(b + 1) * seq_len];
        let mut sm_mask = vec![0u8; seq_len * seq_len];
        for i in 0..seq_len {
            sm_mask[i * seq_len..(i + 1) * seq_len].copy_from_slice(key_mask);
        }
        for h in 0..n_heads {
            let qh = head_slice(&cache.q, b, seq_len, h, dh);
            let kh = head_slice(&cache.k, b, seq_len, h, dh);
            let vh = head_slice(&cache.v, b, seq_len, h, dh);
            let dctx = head_slice(&dcontext, b, seq_len, h, dh);

            let base = (b * n_heads + h) * seq_len;
            let mut attn = Tensor::zeros(&[seq_len, seq_len]);
            for i in 0..seq_len {
                attn.row_mut(i).copy_from_slice(cache.probs.row(base + i));
            }

            // context = attn * vh
            let dattn = dctx.matmul_nt(&vh)?;
            let dvh = attn.matmul_tn(&dctx)?;

            let mut dscores = softmax_rows_backward(&attn, &dattn, Some(&sm_mask));
            dscores.scale(scale);

            let dqh = dscores.matmul(&kh)?;
            let dkh = dscores.matmul_tn(&qh)?;

            head_scatter_add(&mut dq, &dqh, b, seq_len, h, dh);
            head_scatter_add(&mut dk, &dkh, b, seq_len, h, dh);
            head_scatter_add(&mut dv, &dvh, b, seq_len, h, dh);
        }
    }

    let mut dx = linear_backward(x, params.wq, &dq, grads.wq, grads.bq)?;
    dx.add_assign(&linear_backward(x, params.wk, &dk, grads.wk, grads.bk)?)?;
    dx.add_assign(&linear_backward(x, params.wv, &dv, grads.wv, grads.bv)?)?;
    Ok(dx)
}
