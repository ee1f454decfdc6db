//! The encoder and its two classification heads.
//!
//! A small BERT-shaped encoder: token plus learned position embeddings, then
//! `n_layers` of (masked multi-head self-attention, add & norm, GELU
//! feed-forward, add & norm). The final hidden states feed one of two
//! pooling heads:
//!
//! * attention pooling: a learnable query scores every token of the last
//!   hidden state, a masked softmax turns the scores into weights, and the
//!   weighted sum is passed through a learnable projection. With the query
//!   at zero this is exactly mean pooling, which is also where training
//!   starts.
//! * mean pooling: the arithmetic mean of the last hidden states over
//!   non-padding positions.
//!
//! The pooled vector goes through dropout, a linear layer, and a row
//! softmax to produce class probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    dropout, dropout_backward, embedding_backward, embedding_lookup, gelu, gelu_backward,
    grad_check, layer_norm, layer_norm_backward, linear, linear_backward, multi_head_attention,
    multi_head_attention_backward, softmax_rows, softmax_rows_backward, AttentionCache,
    AttentionGrads, AttentionParams, DropoutMask, GradCheckReport, LayerNormCache, ParamStore,
    Tensor, LAYER_NORM_EPS,
};
use crate::rng::{derive_seed, SplitMix64};
use crate::textprep::TokenBatch;

/// Which head sits on top of the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolerKind {
    Attention,
    Mean,
}

impl std::str::FromStr for PoolerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<PoolerKind> {
        match s {
            "attention" => Ok(PoolerKind::Attention),
            "mean" => Ok(PoolerKind::Mean),
            other => Err(Error::Config(format!(
                "unknown pooler_kind {other:?} (expected \"attention\" or \"mean\")"
            ))),
        }
    }
}

/// Encoder and head dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub pooler_kind: PoolerKind,
    pub n_classes: usize,
    /// Dropout on the pooled vector before the classifier.
    pub dropout_p: f64,
    /// Dropout inside the encoder (after attention and feed-forward).
    pub encoder_dropout_p: f64,
    /// Whether pooling sees the CLS position. It is a live token, so the
    /// default is true; with false, pooling averages/attends over the
    /// remaining live tokens (CLS is kept only when it is the sole live
    /// token in a row).
    pub pool_includes_cls: bool,
}

impl ModelConfig {
    /// Desk-scale defaults: 2 layers, d_model 64, 4 heads, d_ff 128.
    pub fn desk_scale(vocab_size: usize, n_classes: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 128,
            max_seq_len: 128,
            pooler_kind: PoolerKind::Attention,
            n_classes,
            dropout_p: 0.5,
            encoder_dropout_p: 0.1,
            pool_includes_cls: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.max_seq_len < 2 || self.max_seq_len > 512 {
            return Err(Error::Config(format!(
                "max_seq_len {} outside [2, 512]",
                self.max_seq_len
            )));
        }
        if self.n_classes < 2 {
            return Err(Error::Config(format!(
                "n_classes {} must be at least 2",
                self.n_classes
            )));
        }
        if self.vocab_size < 4 {
            return Err(Error::Config("vocab_size must cover the specials".into()));
        }
        if self.n_layers == 0 {
            return Err(Error::Config("n_layers must be at least 1".into()));
        }
        if self.d_ff == 0 {
            return Err(Error::Config("d_ff must be at least 1".into()));
        }
        for (name, p) in [
            ("dropout_p", self.dropout_p),
            ("encoder_dropout_p", self.encoder_dropout_p),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("{name} {p} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

const INIT_STD: f64 = 0.02;

/// Create all parameters. Weight matrices (embeddings included) draw from
/// Normal(0, 0.02^2); biases, layer-norm shifts, and the pooler query start
/// at zero; layer-norm scales start at one. The zero query makes the
/// attention pooler open at exactly mean pooling.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    let mut rng = SplitMix64::new(seed);
    let mut ps = ParamStore::new();
    let d = cfg.d_model;

    let mut normal = |shape: &[usize]| {
        let mut t = Tensor::zeros(shape);
        t.fill_normal(&mut rng, INIT_STD);
        t
    };

    ps.insert("embed.token", normal(&[cfg.vocab_size, d]))?;
    ps.insert("embed.pos", normal(&[cfg.max_seq_len, d]))?;
    for layer in 0..cfg.n_layers {
        for w in ["wq", "wk", "wv", "wo"] {
            ps.insert(&format!("enc{layer}.attn.{w}"), normal(&[d, d]))?;
        }
        for b in ["bq", "bk", "bv", "bo"] {
            ps.insert(&format!("enc{layer}.attn.{b}"), Tensor::zeros(&[d]))?;
        }
        ps.insert(&format!("enc{layer}.ln1.gamma"), Tensor::filled(&[d], 1.0))?;
        ps.insert(&format!("enc{layer}.ln1.beta"), Tensor::zeros(&[d]))?;
        ps.insert(&format!("enc{layer}.ffn.w1"), normal(&[d, cfg.d_ff]))?;
        ps.insert(&format!("enc{layer}.ffn.b1"), Tensor::zeros(&[cfg.d_ff]))?;
        ps.insert(&format!("enc{layer}.ffn.w2"), normal(&[cfg.d_ff, d]))?;
        ps.insert(&format!("enc{layer}.ffn.b2"), Tensor::zeros(&[d]))?;
        ps.insert(&format!("enc{layer}.ln2.gamma"), Tensor::filled(&[d], 1.0))?;
        ps.insert(&format!("enc{layer}.ln2.beta"), Tensor::zeros(&[d]))?;
    }
    if cfg.pooler_kind == PoolerKind::Attention {
        ps.insert("pool.query", Tensor::zeros(&[d]))?;
        ps.insert("pool.proj", normal(&[d, d]))?;
    }
    ps.insert("head.w", normal(&[d, cfg.n_classes]))?;
    ps.insert("head.b", Tensor::zeros(&[cfg.n_classes]))?;
    Ok(ps)
}

struct EncoderLayerCache {
    x_in: Tensor,
    attn: AttentionCache,
    attn_drop: DropoutMask,
    ln1: LayerNormCache,
    ln1_out: Tensor,
    ffn_pre: Tensor,
    ffn_act: Tensor,
    ffn_drop: DropoutMask,
    ln2: LayerNormCache,
}

/// Forward activations from [`encoder_forward`].
pub struct EncoderCache {
    layers: Vec<EncoderLayerCache>,
}

fn site_seed(seed: u64, layer: usize, site: u64) -> u64 {
    derive_seed(seed, (layer as u64) * 4 + site)
}

/// Run the encoder over a token batch; returns the last hidden states as a
/// `[batch * seq_len, d_model]` tensor (row `b * seq_len + t` holds token
/// `t` of row `b`).
pub fn encoder_forward(
    cfg: &ModelConfig,
    params: &ParamStore,
    batch: &TokenBatch,
    train: bool,
    seed: u64,
) -> Result<(Tensor, EncoderCache)> {
    if batch.seq_len > cfg.max_seq_len {
        return Err(Error::Data(format!(
            "sequence length {} exceeds max_seq_len {}",
            batch.seq_len, cfg.max_seq_len
        )));
    }
    let token_table = params.value("embed.token");
    let pos_table = params.value("embed.pos");

    let mut x = embedding_lookup(&batch.ids, token_table)?;
    for b in 0..batch.batch {
        for t in 0..batch.seq_len {
            let row = x.row_mut(b * batch.seq_len + t);
            for (v, &p) in row.iter_mut().zip(pos_table.row(t)) {
                *v += p;
            }
        }
    }

    let mut layers = Vec::with_capacity(cfg.n_layers);
    for layer in 0..cfg.n_layers {
        let name = |suffix: &str| format!("enc{layer}.{suffix}");
        let attn_params = AttentionParams {
            wq: params.value(&name("attn.wq")),
            bq: params.value(&name("attn.bq")),
            wk: params.value(&name("attn.wk")),
            bk: params.value(&name("attn.bk")),
            wv: params.value(&name("attn.wv")),
            bv: params.value(&name("attn.bv")),
            wo: params.value(&name("attn.wo")),
            bo: params.value(&name("attn.bo")),
        };
        let (attn_out, attn_cache) = multi_head_attention(
            &x,
            batch.batch,
            batch.seq_len,
            &batch.mask,
            &attn_params,
            cfg.n_heads,
        )?;
        let (attn_dropped, attn_drop) = dropout(
            &attn_out,
            cfg.encoder_dropout_p,
            train,
            site_seed(seed, layer, 0),
        )?;
        let mut res1 = x.clone();
        res1.add_assign(&attn_dropped)?;
        let (ln1_out, ln1) = layer_norm(
            &res1,
            params.value(&name("ln1.gamma")),
            params.value(&name("ln1.beta")),
            LAYER_NORM_EPS,
        )?;

        let ffn_pre = linear(
            &ln1_out,
            params.value(&name("ffn.w1")),
            params.value(&name("ffn.b1")),
        )?;
        let ffn_act = gelu(&ffn_pre);
        let ffn_out = linear(
            &ffn_act,
            params.value(&name("ffn.w2")),
            params.value(&name("ffn.b2")),
        )?;
        let (ffn_dropped, ffn_drop) = dropout(
            &ffn_out,
            cfg.encoder_dropout_p,
            train,
            site_seed(seed, layer, 1),
        )?;
        let mut res2 = ln1_out.clone();
        res2.add_assign(&ffn_dropped)?;
        let (ln2_out, ln2) = layer_norm(
            &res2,
            params.value(&name("ln2.gamma")),
            params.value(&name("ln2.beta")),
            LAYER_NORM_EPS,
        )?;

        layers.push(EncoderLayerCache {
            x_in: x,
            attn: attn_cache,
            attn_drop,
            ln1,
            ln1_out,
            ffn_pre,
            ffn_act,
            ffn_drop,
            ln2,
        });
        x = ln2_out;
    }
    Ok((x, EncoderCache { layers }))
}

fn add_grad(params: &mut ParamStore, name: &str, g: &Tensor) {
    params
        .grad_mut(name)
        .add_assign(g)
        .expect("gradient shape matches parameter");
}

/// Backward through the encoder; accumulates parameter gradients from
/// `d_hidden` (the gradient at the final hidden states).
pub fn encoder_backward(
    cfg: &ModelConfig,
    params: &mut ParamStore,
    batch: &TokenBatch,
    cache: &EncoderCache,
    d_hidden: &Tensor,
) -> Result<()> {
    let d = cfg.d_model;
    let mut dx = d_hidden.clone();
    for (layer, lc) in cache.layers.iter().enumerate().rev() {
        let name = |suffix: &str| format!("enc{layer}.{suffix}");

        // ln2
        let mut dg2 = Tensor::zeros(&[d]);
        let mut db2 = Tensor::zeros(&[d]);
        let d_res2 = layer_norm_backward(
            &lc.ln2,
            params.value(&name("ln2.gamma")),
            &dx,
            &mut dg2,
            &mut db2,
        );
        add_grad(params, &name("ln2.gamma"), &dg2);
        add_grad(params, &name("ln2.beta"), &db2);

        // feed-forward branch
        let d_ffn_out = dropout_backward(&lc.ffn_drop, &d_res2);
        let mut dw2 = Tensor::zeros(&[cfg.d_ff, d]);
        let mut db2f = Tensor::zeros(&[d]);
        let d_ffn_act = linear_backward(
            &lc.ffn_act,
            params.value(&name("ffn.w2")),
            &d_ffn_out,
            &mut dw2,
            &mut db2f,
        )?;
        add_grad(params, &name("ffn.w2"), &dw2);
        add_grad(params, &name("ffn.b2"), &db2f);
        let d_ffn_pre = gelu_backward(&lc.ffn_pre, &d_ffn_act);
        let mut dw1 = Tensor::zeros(&[d, cfg.d_ff]);
        let mut db1f = Tensor::zeros(&[cfg.d_ff]);
        let mut d_ln1_out = linear_backward(
            &lc.ln1_out,
            params.value(&name("ffn.w1")),
            &d_ffn_pre,
            &mut dw1,
            &mut db1f,
        )?;
        add_grad(params, &name("ffn.w1"), &dw1);
        add_grad(params, &name("ffn.b1"), &db1f);
        // residual branch into ln1_out
        d_ln1_out.add_assign(&d_res2)?;

        // ln1
        let mut dg1 = Tensor::zeros(&[d]);
        let mut db1 = Tensor::zeros(&[d]);
        let d_res1 = layer_norm_backward(
            &lc.ln1,
            params.value(&name("ln1.gamma")),
            &d_ln1_out,
            &mut dg1,
            &mut db1,
        );
        add_grad(params, &name("ln1.gamma"), &dg1);
        add_grad(params, &name("ln1.beta"), &db1);

        // attention branch
        let d_attn_out = dropout_backward(&lc.attn_drop, &d_res1);
        let mut g = AttnGradBuffers::new(d);
        let attn_params = AttentionParams {
            wq: params.value(&name("attn.wq")),
            bq: params.value(&name("attn.bq")),
            wk: params.value(&name("attn.wk")),
            bk: params.value(&name("attn.bk")),
            wv: params.value(&name("attn.wv")),
            bv: params.value(&name("attn.bv")),
            wo: params.value(&name("attn.wo")),
            bo: params.value(&name("attn.bo")),
        };
        let mut grads = AttentionGrads {
            wq: &mut g.wq,
            bq: &mut g.bq,
            wk: &mut g.wk,
            bk: &mut g.bk,
            wv: &mut g.wv,
            bv: &mut g.bv,
            wo: &mut g.wo,
            bo: &mut g.bo,
        };
        let mut d_x_in = multi_head_attention_backward(
            &lc.x_in,
            batch.batch,
            batch.seq_len,
            &batch.mask,
            &attn_params,
            &lc.attn,
            &d_attn_out,
            &mut grads,
        )?;
        add_grad(params, &name("attn.wq"), &g.wq);
        add_grad(params, &name("attn.bq"), &g.bq);
        add_grad(params, &name("attn.wk"), &g.wk);
        add_grad(params, &name("attn.bk"), &g.bk);
        add_grad(params, &name("attn.wv"), &g.wv);
        add_grad(params, &name("attn.bv"), &g.bv);
        add_grad(params, &name("attn.wo"), &g.wo);
        add_grad(params, &name("attn.bo"), &g.bo);

        // residual branch into x_in
        d_x_in.add_assign(&d_res1)?;
        dx = d_x_in;
    }

    // embeddings
    let mut d_token = Tensor::zeros(params.value("embed.token").shape());
    embedding_backward(&batch.ids, &dx, &mut d_token);
    add_grad(params, "embed.token", &d_token);
    let mut d_pos = Tensor::zeros(params.value("embed.pos").shape());
    for b in 0..batch.batch {
        for t in 0..batch.seq_len {
            let src = dx.row(b * batch.seq_len + t);
            let dst = d_pos.row_mut(t);
            for (gp, &v) in dst.iter_mut().zip(src) {
                *gp += v;
            }
        }
    }
    add_grad(params, "embed.pos", &d_pos);
    Ok(())
}

struct AttnGradBuffers {
    wq: Tensor,
    bq: Tensor,
    wk: Tensor,
    bk: Tensor,
    wv: Tensor,
    bv: Tensor,
    wo: Tensor,
    bo: Tensor,
}

impl AttnGradBuffers {
    fn new(d: usize) -> AttnGradBuffers {
        AttnGradBuffers {
            wq: Tensor::zeros(&[d, d]),
            bq: Tensor::zeros(&[d]),
            wk: Tensor::zeros(&[d, d]),
            bk: Tensor::zeros(&[d]),
            wv: Tensor::zeros(&[d, d]),
            bv: Tensor::zeros(&[d]),
            wo: Tensor::zeros(&[d, d]),
            bo: Tensor::zeros(&[d]),
        }
    }
}

/// Cache from [`attention_pool`].
pub struct AttnPoolCache {
    /// Softmax weights over tokens, `[batch, seq_len]`.
    pub weights: Tensor,
    /// Weighted sum of hidden states before the projection, `[batch, d]`.
    pub mixed: Tensor,
}

/// Attention pooling: score every token of the last hidden state with the
/// learnable `query`, softmax the scores over live tokens, take the
/// weighted sum, and project it.
pub fn attention_pool(
    hidden: &Tensor,
    batch: usize,
    seq_len: usize,
    mask: &[u8],
    query: &Tensor,
    proj: &Tensor,
) -> Result<(Tensor, AttnPoolCache)> {
    let d = hidden.cols();
    let mut scores = Tensor::zeros(&[batch, seq_len]);
    for b in 0..batch {
        for t in 0..seq_len {
            let h = hidden.row(b * seq_len + t);
            let mut s = 0.0;
            for (hv, qv) in h.iter().zip(query.data()) {
                s += hv * qv;
            }
            scores.data_mut()[b * seq_len + t] = s;
        }
    }
    let weights = softmax_rows(&scores, Some(mask))?;
    let mut mixed = Tensor::zeros(&[batch, d]);
    for b in 0..batch {
        for t in 0..seq_len {
            let w = weights.data()[b * seq_len + t];
            if w == 0.0 {
                continue;
            }
            let h = hidden.row(b * seq_len + t);
            let m = mixed.row_mut(b);
            for (mv, &hv) in m.iter_mut().zip(h) {
                *mv += w * hv;
            }
        }
    }
    let pooled = mixed.matmul(proj)?;
    Ok((pooled, AttnPoolCache { weights, mixed }))
}

/// Backward of [`attention_pool`]; accumulates into `dquery`/`dproj` and
/// returns the gradient with respect to the hidden states.
#[allow(clippy::too_many_arguments)]
pub fn attention_pool_backward(
    hidden: &Tensor,
    batch: usize,
    seq_len: usize,
    mask: &[u8],
    query: &Tensor,
    proj: &Tensor,
    cache: &AttnPoolCache,
    d_pooled: &Tensor,
    dquery: &mut Tensor,
    dproj: &mut Tensor,
) -> Result<Tensor> {
    let d = hidden.cols();
    dproj.add_assign(&cache.mixed.matmul_tn(d_pooled)?)?;
    let d_mixed = d_pooled.matmul_nt(proj)?;

    let mut d_hidden = Tensor::zeros(&[batch * seq_len, d]);
    let mut d_weights = Tensor::zeros(&[batch, seq_len]);
    for b in 0..batch {
        let dm = d_mixed.row(b);
        for t in 0..seq_len {
            let idx = b * seq_len + t;
            let h = hidden.row(idx);
            let mut dot = 0.0;
            for (dv, &hv) in dm.iter().zip(h) {
                dot += dv * hv;
            }
            d_weights.data_mut()[idx] = dot;
            let w = cache.weights.data()[idx];
            if w != 0.0 {
                let dh = d_hidden.row_mut(idx);
                for (g, &dv) in dh.iter_mut().zip(dm) {
                    *g += w * dv;
                }
            }
        }
    }
    let d_scores = softmax_rows_backward(&cache.weights, &d_weights, Some(mask));
    for b in 0..batch {
        for t in 0..seq_len {
            let ds = d_scores.data()[b * seq_len + t];
            if ds == 0.0 {
                continue;
            }
            let h = hidden.row(b * seq_len + t);
            for (gq, &hv) in dquery.data_mut().iter_mut().zip(h) {
                *gq += ds * hv;
            }
            let dh = d_hidden.row_mut(b * seq_len + t);
            for (g, &qv) in dh.iter_mut().zip(query.data()) {
                *g += ds * qv;
            }
        }
    }
    Ok(d_hidden)
}

/// Mean of the hidden states over live (mask 1) positions, per row.
pub fn mean_pool(hidden: &Tensor, batch: usize, seq_len: usize, mask: &[u8]) -> Result<Tensor> {
    let d = hidden.cols();
    let mut pooled = Tensor::zeros(&[batch, d]);
    for b in 0..batch {
        let live: usize = mask[b * seq_len..(b + 1) * seq_len]
            .iter()
            .map(|&m| m as usize)
            .sum();
        if live == 0 {
            return Err(Error::Numeric(format!(
                "row {b} has no live tokens to pool"
            )));
        }
        let inv = 1.0 / live as f64;
        for t in 0..seq_len {
            if mask[b * seq_len + t] == 0 {
                continue;
            }
            let h = hidden.row(b * seq_len + t);
            let p = pooled.row_mut(b);
            for (pv, &hv) in p.iter_mut().zip(h) {
                *pv += hv;
            }
        }
        for pv in pooled.row_mut(b) {
            *pv *= inv;
        }
    }
    Ok(pooled)
}

/// Backward of [`mean_pool`].
pub fn mean_pool_backward(
    batch: usize,
    seq_len: usize,
    d: usize,
    mask: &[u8],
    d_pooled: &Tensor,
) -> Tensor {
    let mut d_hidden = Tensor::zeros(&[batch * seq_len, d]);
    for b in 0..batch {
        let live: usize = mask[b * seq_len..(b + 1) * seq_len]
            .iter()
            .map(|&m| m as usize)
            .sum();
        let inv = 1.0 / live as f64;
        let dp = d_pooled.row(b);
        for t in 0..seq_len {
            if mask[b * seq_len + t] == 0 {
                continue;
            }
            let dh = d_hidden.row_mut(b * seq_len + t);
            for (g, &dv) in dh.iter_mut().zip(dp) {
                *g = dv * inv;
            }
        }
    }
    d_hidden
}

/// Cache from [`classify`].
pub struct ClassifyCache {
    pub dropped: Tensor,
    pub drop_mask: DropoutMask,
    pub probs: Tensor,
}

/// Dropout on the pooled vector (training only), a linear layer, then a row
/// softmax. Rows of the result sum to 1 and are strictly positive.
pub fn classify(
    pooled: &Tensor,
    w: &Tensor,
    b: &Tensor,
    dropout_p: f64,
    train: bool,
    seed: u64,
) -> Result<(Tensor, ClassifyCache)> {
    let (dropped, drop_mask) = dropout(pooled, dropout_p, train, seed)?;
    let logits = linear(&dropped, w, b)?;
    let probs = softmax_rows(&logits, None)?;
    Ok((
        probs.clone(),
        ClassifyCache {
            dropped,
            drop_mask,
            probs,
        },
    ))
}

/// Backward of [`classify`] from the gradient at the logits (the softmax and
/// loss gradients fuse there); returns the gradient at the pooled vector.
pub fn classify_backward(
    cache: &ClassifyCache,
    w: &Tensor,
    d_logits: &Tensor,
    dw: &mut Tensor,
    db: &mut Tensor,
) -> Result<Tensor> {
    let d_dropped = linear_backward(&cache.dropped, w, d_logits, dw, db)?;
    Ok(dropout_backward(&cache.drop_mask, &d_dropped))
}

/// Everything the full backward pass needs from a forward pass.
pub struct ForwardCache {
    enc: EncoderCache,
    hidden: Tensor,
    pool_mask: Vec<u8>,
    pool: PoolCacheKind,
    cls: ClassifyCache,
}

enum PoolCacheKind {
    Attention(AttnPoolCache),
    Mean,
}

impl ForwardCache {
    pub fn probs(&self) -> &Tensor {
        &self.cls.probs
    }
}

const HEAD_DROPOUT_TAG: u64 = 0x00F0_0000_0000_0001;

/// The whole model: encoder, pooler, classifier.
#[derive(Debug, Clone)]
pub struct Model {
    pub cfg: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Model> {
        let params = init_params(&cfg, seed)?;
        Ok(Model { cfg, params })
    }

    pub fn from_parts(cfg: ModelConfig, params: ParamStore) -> Result<Model> {
        cfg.validate()?;
        Ok(Model { cfg, params })
    }

    /// Full forward pass to class probabilities. `head_dropout_p` is the
    /// dropout applied to the pooled vector when `train` is set.
    pub fn forward(
        &self,
        batch: &TokenBatch,
        train: bool,
        head_dropout_p: f64,
        seed: u64,
    ) -> Result<(Tensor, ForwardCache)> {
        forward_probs(&self.cfg, &self.params, batch, train, head_dropout_p, seed)
    }

    /// Accumulate gradients for a batch from the gradient at the logits.
    pub fn backward(
        &mut self,
        batch: &TokenBatch,
        cache: &ForwardCache,
        d_logits: &Tensor,
    ) -> Result<()> {
        backward_from_logits(&self.cfg, &mut self.params, batch, cache, d_logits)
    }

    /// Eval-mode probabilities.
    pub fn predict_probs(&self, batch: &TokenBatch) -> Result<Tensor> {
        let (probs, _) = self.forward(batch, false, 0.0, 0)?;
        Ok(probs)
    }

    /// Eval-mode argmax labels (first maximum wins ties) plus probabilities.
    pub fn predict(&self, batch: &TokenBatch) -> Result<(Vec<usize>, Tensor)> {
        let probs = self.predict_probs(batch)?;
        let preds = argmax_rows(&probs);
        Ok((preds, probs))
    }
}

pub fn argmax_rows(probs: &Tensor) -> Vec<usize> {
    (0..probs.rows())
        .map(|i| {
            let row = probs.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Free-function forward so gradient checks can re-evaluate the graph as a
/// pure function of a parameter store.
pub fn forward_probs(
    cfg: &ModelConfig,
    params: &ParamStore,
    batch: &TokenBatch,
    train: bool,
    head_dropout_p: f64,
    seed: u64,
) -> Result<(Tensor, ForwardCache)> {
    let (hidden, enc) = encoder_forward(cfg, params, batch, train, seed)?;
    let pool_mask = pooling_mask(batch, cfg.pool_includes_cls);
    let (pooled, pool) = match cfg.pooler_kind {
        PoolerKind::Attention => {
            let (pooled, cache) = attention_pool(
                &hidden,
                batch.batch,
                batch.seq_len,
                &pool_mask,
                params.value("pool.query"),
                params.value("pool.proj"),
            )?;
            (pooled, PoolCacheKind::Attention(cache))
        }
        PoolerKind::Mean => (
            mean_pool(&hidden, batch.batch, batch.seq_len, &pool_mask)?,
            PoolCacheKind::Mean,
        ),
    };
    let (probs, cls) = classify(
        &pooled,
        params.value("head.w"),
        params.value("head.b"),
        head_dropout_p,
        train,
        derive_seed(seed, HEAD_DROPOUT_TAG),
    )?;
    Ok((
        probs,
        ForwardCache {
            enc,
            hidden,
            pool_mask,
            pool,
            cls,
        },
    ))
}

/// The mask pooling runs under. With `include_cls` unset, the CLS position
/// is dropped from pooling unless it is a row's only live token.
fn pooling_mask(batch: &TokenBatch, include_cls: bool) -> Vec<u8> {
    let mut mask = batch.mask.clone();
    if include_cls {
        return mask;
    }
    for b in 0..batch.batch {
        let row = &mut mask[b * batch.seq_len..(b + 1) * batch.seq_len];
        let live_after_cls: usize = row.iter().skip(1).map(|&m| m as usize).sum();
        if live_after_cls > 0 {
            row[0] = 0;
        }
    }
    mask
}

/// Free-function backward matching [`forward_probs`].
pub fn backward_from_logits(
    cfg: &ModelConfig,
    params: &mut ParamStore,
    batch: &TokenBatch,
    cache: &ForwardCache,
    d_logits: &Tensor,
) -> Result<()> {
    let d = cfg.d_model;
    let mut dw = Tensor::zeros(&[d, cfg.n_classes]);
    let mut db = Tensor::zeros(&[cfg.n_classes]);
    let head_w = params.value("head.w").clone();
    let d_pooled = classify_backward(&cache.cls, &head_w, d_logits, &mut dw, &mut db)?;
    add_grad(params, "head.w", &dw);
    add_grad(params, "head.b", &db);

    let d_hidden = match &cache.pool {
        PoolCacheKind::Attention(pool_cache) => {
            let query = params.value("pool.query").clone();
            let proj = params.value("pool.proj").clone();
            let mut dquery = Tensor::zeros(&[d]);
            let mut dproj = Tensor::zeros(&[d, d]);
            let d_hidden = attention_pool_backward(
                &cache.hidden,
                batch.batch,
                batch.seq_len,
                &cache.pool_mask,
                &query,
                &proj,
                pool_cache,
                &d_pooled,
                &mut dquery,
                &mut dproj,
            )?;
            add_grad(params, "pool.query", &dquery);
            add_grad(params, "pool.proj", &dproj);
            d_hidden
        }
        PoolCacheKind::Mean => {
            mean_pool_backward(batch.batch, batch.seq_len, d, &cache.pool_mask, &d_pooled)
        }
    };
    encoder_backward(cfg, params, batch, &cache.enc, &d_hidden)
}

/// Gradient-check the full encoder -> pooler -> classifier graph on a batch,
/// using the cross-entropy loss against `labels` as the scalar.
pub fn grad_check_full_graph(
    cfg: &ModelConfig,
    params: &mut ParamStore,
    batch: &TokenBatch,
    labels: &[usize],
    h: f64,
    tol_rel: f64,
) -> Result<GradCheckReport> {
    params.zero_grads();
    let (probs, cache) = forward_probs(cfg, params, batch, false, 0.0, 0)?;
    let (_, d_logits) = crate::training::cross_entropy_loss(&probs, labels)?;
    backward_from_logits(cfg, params, batch, &cache, &d_logits)?;
    let cfg = cfg.clone();
    let batch = batch.clone();
    let labels = labels.to_vec();
    let report = grad_check(
        params,
        move |ps| {
            let (probs, _) =
                forward_probs(&cfg, ps, &batch, false, 0.0, 0).expect("forward in grad check");
            crate::training::cross_entropy_loss(&probs, &labels)
                .expect("loss in grad check")
                .0
        },
        h,
        tol_rel,
    );
    Ok(report)
}
