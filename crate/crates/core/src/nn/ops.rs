//! Elementary layers with explicit forward and backward passes.
//!
//! Backward functions accumulate into the gradient tensors they are handed
//! and return the gradient with respect to their input, so layers chain by
//! plain function composition in reverse order.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

use super::tensor::Tensor;

/// `y = x W + b` for `x [n x d_in]`, `W [d_in x d_out]`, `b [d_out]`.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    if b.shape() != [w.cols()] {
        return Err(Error::Dim(format!(
            "linear: bias {:?} does not match weight {:?}",
            b.shape(),
            w.shape()
        )));
    }
    let mut y = x.matmul(w)?;
    let n = y.rows();
    let d = y.cols();
    for i in 0..n {
        let row = &mut y.data_mut()[i * d..(i + 1) * d];
        for (v, &bias) in row.iter_mut().zip(b.data()) {
            *v += bias;
        }
    }
    Ok(y)
}

/// Backward of [`linear`]: `dW += x^T dy`, `db += column sums of dy`,
/// returns `dx = dy W^T`.
pub fn linear_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
    dw: &mut Tensor,
    db: &mut Tensor,
) -> Result<Tensor> {
    dw.add_assign(&x.matmul_tn(dy)?)?;
    let n = dy.rows();
    let d = dy.cols();
    for i in 0..n {
        let row = &dy.data()[i * d..(i + 1) * d];
        for (g, &v) in db.data_mut().iter_mut().zip(row) {
            *g += v;
        }
    }
    dy.matmul_nt(w)
}

/// Row-wise softmax with max subtraction. Masked entries (mask 0) take no
/// part in the max or the sum and come out exactly 0; each live row sums
/// to 1. A fully-masked row is a numeric-domain error.
pub fn softmax_rows(x: &Tensor, mask: Option<&[u8]>) -> Result<Tensor> {
    let (n, m) = (x.rows(), x.cols());
    if let Some(mk) = mask {
        if mk.len() != n * m {
            return Err(Error::Dim(format!(
                "softmax mask has {} entries for a {n}x{m} input",
                mk.len()
            )));
        }
    }
    let live = |i: usize, j: usize| mask.is_none_or(|mk| mk[i * m + j] != 0);
    let mut out = Tensor::zeros(&[n, m]);
    for i in 0..n {
        let mut max = f64::NEG_INFINITY;
        for j in 0..m {
            if live(i, j) {
                max = max.max(x.data()[i * m + j]);
            }
        }
        if max == f64::NEG_INFINITY {
            return Err(Error::Numeric(format!("softmax row {i} is fully masked")));
        }
        let mut sum = 0.0;
        for j in 0..m {
            if live(i, j) {
                let e = (x.data()[i * m + j] - max).exp();
                out.data_mut()[i * m + j] = e;
                sum += e;
            }
        }
        for j in 0..m {
            if live(i, j) {
                out.data_mut()[i * m + j] /= sum;
            }
        }
    }
    Ok(out)
}

/// Backward of [`softmax_rows`] given its output `y`:
/// `ds_j = y_j (dy_j - sum_k dy_k y_k)` over live entries, 0 elsewhere.
pub fn softmax_rows_backward(y: &Tensor, dy: &Tensor, mask: Option<&[u8]>) -> Tensor {
    let (n, m) = (y.rows(), y.cols());
    let live = |i: usize, j: usize| mask.is_none_or(|mk| mk[i * m + j] != 0);
    let mut ds = Tensor::zeros(&[n, m]);
    for i in 0..n {
        let mut dot = 0.0;
        for j in 0..m {
            if live(i, j) {
                dot += dy.data()[i * m + j] * y.data()[i * m + j];
            }
        }
        for j in 0..m {
            if live(i, j) {
                ds.data_mut()[i * m + j] = y.data()[i * m + j] * (dy.data()[i * m + j] - dot);
            }
        }
    }
    ds
}

/// Per-row normalization state kept for the backward pass.
pub struct LayerNormCache {
    /// `(x - mean) / sqrt(var + eps)` per entry.
    pub normalized: Tensor,
    /// `1 / sqrt(var + eps)` per row.
    pub inv_std: Vec<f64>,
}

pub const LAYER_NORM_EPS: f64 = 1e-12;

/// Normalize each row to zero mean and unit variance, then scale by `gamma`
/// and shift by `beta`.
pub fn layer_norm(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f64,
) -> Result<(Tensor, LayerNormCache)> {
    let (n, d) = (x.rows(), x.cols());
    if d == 0 {
        return Err(Error::Dim("layer_norm over zero-width rows".into()));
    }
    if gamma.shape() != [d] || beta.shape() != [d] {
        return Err(Error::Dim(format!(
            "layer_norm: gamma {:?} / beta {:?} for width {d}",
            gamma.shape(),
            beta.shape()
        )));
    }
    let mut out = Tensor::zeros(&[n, d]);
    let mut normalized = Tensor::zeros(&[n, d]);
    let mut inv_std = Vec::with_capacity(n);
    for i in 0..n {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let istd = 1.0 / (var + eps).sqrt();
        inv_std.push(istd);
        for j in 0..d {
            let xh = (row[j] - mean) * istd;
            normalized.data_mut()[i * d + j] = xh;
            out.data_mut()[i * d + j] = xh * gamma.data()[j] + beta.data()[j];
        }
    }
    Ok((
        out,
        LayerNormCache {
            normalized,
            inv_std,
        },
    ))
}

/// Backward of [`layer_norm`] using the standard closed form.
pub fn layer_norm_backward(
    cache: &LayerNormCache,
    gamma: &Tensor,
    dy: &Tensor,
    dgamma: &mut Tensor,
    dbeta: &mut Tensor,
) -> Tensor {
    let (n, d) = (dy.rows(), dy.cols());
    let mut dx = Tensor::zeros(&[n, d]);
    for i in 0..n {
        let istd = cache.inv_std[i];
        let xh = cache.normalized.row(i);
        let dyr = dy.row(i);
        let mut sum_dyg = 0.0;
        let mut sum_dyg_xh = 0.0;
        for j in 0..d {
            let dyg = dyr[j] * gamma.data()[j];
            sum_dyg += dyg;
            sum_dyg_xh += dyg * xh[j];
            dgamma.data_mut()[j] += dyr[j] * xh[j];
            dbeta.data_mut()[j] += dyr[j];
        }
        let inv_d = 1.0 / d as f64;
        for j in 0..d {
            let dyg = dyr[j] * gamma.data()[j];
            dx.data_mut()[i * d + j] = istd * (dyg - inv_d * sum_dyg - xh[j] * inv_d * sum_dyg_xh);
        }
    }
    dx
}

const GELU_COEFF: f64 = 0.044715;

fn gelu_scalar(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + GELU_COEFF * x * x * x)).tanh())
}

fn gelu_grad_scalar(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let u = c * (x + GELU_COEFF * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * GELU_COEFF * x * x)
}

/// GELU with the tanh approximation.
pub fn gelu(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for v in out.data_mut() {
        *v = gelu_scalar(*v);
    }
    out
}

/// Backward of [`gelu`]: `dx = dy * gelu'(x)`.
pub fn gelu_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    let mut dx = dy.clone();
    for (g, &v) in dx.data_mut().iter_mut().zip(x.data()) {
        *g *= gelu_grad_scalar(v);
    }
    dx
}

/// The scaled keep-mask from a dropout forward pass; entries are either 0 or
/// `1/(1-p)`.
pub struct DropoutMask {
    scaled: Option<Tensor>,
}

/// Zero entries with probability `p` and scale survivors by `1/(1-p)` when
/// training; the identity in eval mode or at `p = 0`. The mask depends only
/// on `(seed, shape)`.
pub fn dropout(x: &Tensor, p: f64, train: bool, seed: u64) -> Result<(Tensor, DropoutMask)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!("dropout p={p} outside [0, 1)")));
    }
    if !train || p == 0.0 {
        return Ok((x.clone(), DropoutMask { scaled: None }));
    }
    let mut rng = SplitMix64::new(seed);
    let keep_scale = 1.0 / (1.0 - p);
    let mut mask = Tensor::zeros(x.shape());
    for m in mask.data_mut() {
        if rng.next_f64() >= p {
            *m = keep_scale;
        }
    }
    let mut out = x.clone();
    for (v, &m) in out.data_mut().iter_mut().zip(mask.data()) {
        *v *= m;
    }
    Ok((out, DropoutMask { scaled: Some(mask) }))
}

/// Backward of [`dropout`]: the same scaled mask applied to `dy`.
pub fn dropout_backward(mask: &DropoutMask, dy: &Tensor) -> Tensor {
    match &mask.scaled {
        None => dy.clone(),
        Some(m) => {
            let mut dx = dy.clone();
            for (g, &s) in dx.data_mut().iter_mut().zip(m.data()) {
                *g *= s;
            }
            dx
        }
    }
}

/// Gather embedding rows: `out[i] = table[ids[i]]`.
pub fn embedding_lookup(ids: &[u32], table: &Tensor) -> Result<Tensor> {
    let (v, d) = (table.rows(), table.cols());
    let mut out = Tensor::zeros(&[ids.len(), d]);
    for (i, &id) in ids.iter().enumerate() {
        if id as usize >= v {
            return Err(Error::Data(format!(
                "token id {id} out of range for vocab size {v}"
            )));
        }
        out.row_mut(i).copy_from_slice(table.row(id as usize));
    }
    Ok(out)
}

/// Backward of [`embedding_lookup`]: scatter-add `dy` rows into the table
/// gradient. Repeated ids accumulate.
pub fn embedding_backward(ids: &[u32], dy: &Tensor, dtable: &mut Tensor) {
    let d = dtable.cols();
    for (i, &id) in ids.iter().enumerate() {
        let src = dy.row(i);
        let dst = &mut dtable.data_mut()[id as usize * d..(id as usize + 1) * d];
        for (g, &v) in dst.iter_mut().zip(src) {
            *g += v;
        }
    }
}
