//! AdamW with decoupled weight decay, and the linear learning-rate schedule.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::{ParamStore, Tensor};

use super::TrainConfig;

/// First/second moment estimates per parameter plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    moments: BTreeMap<String, (Tensor, Tensor)>,
    pub step: u64,
}

impl OptimizerState {
    /// Zero-initialized moments matching every parameter in the store.
    pub fn new(params: &ParamStore) -> OptimizerState {
        let moments = params
            .iter()
            .map(|(name, p)| {
                let shape = p.value.shape();
                (name.clone(), (Tensor::zeros(shape), Tensor::zeros(shape)))
            })
            .collect();
        OptimizerState { moments, step: 0 }
    }

    pub fn from_parts(moments: BTreeMap<String, (Tensor, Tensor)>, step: u64) -> OptimizerState {
        OptimizerState { moments, step }
    }

    pub fn moments(&self) -> &BTreeMap<String, (Tensor, Tensor)> {
        &self.moments
    }
}

/// One AdamW update over every parameter, at learning rate `lr_t`:
///
/// ```text
/// t <- t + 1
/// m <- b1 m + (1 - b1) g           v <- b2 v + (1 - b2) g^2
/// m_hat = m / (1 - b1^t)           v_hat = v / (1 - b2^t)
/// theta <- theta - lr_t * m_hat / (sqrt(v_hat) + eps) - lr_t * wd * theta
/// ```
///
/// The decay term uses the pre-update `theta` (decoupled decay). Gradients
/// are zeroed afterwards. A non-finite gradient aborts, naming the
/// parameter.
pub fn adamw_step(
    params: &mut ParamStore,
    state: &mut OptimizerState,
    lr_t: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    for (name, p) in params.iter() {
        p.grad
            .check_finite(&format!("gradient of {name:?}"))
            .map_err(|_| Error::Numeric(format!("non-finite gradient for parameter {name:?}")))?;
    }

    state.step += 1;
    let t = state.step;
    let bias1 = 1.0 - cfg.beta1.powi(t as i32);
    let bias2 = 1.0 - cfg.beta2.powi(t as i32);

    for (name, p) in params.iter_mut() {
        let (m, v) = state
            .moments
            .get_mut(name)
            .unwrap_or_else(|| panic!("optimizer state missing parameter {name:?}"));
        let theta = p.value.data_mut();
        let grad = p.grad.data_mut();
        for i in 0..theta.len() {
            let g = grad[i];
            m.data_mut()[i] = cfg.beta1 * m.data()[i] + (1.0 - cfg.beta1) * g;
            v.data_mut()[i] = cfg.beta2 * v.data()[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m.data()[i] / bias1;
            let v_hat = v.data()[i] / bias2;
            let update = m_hat / (v_hat.sqrt() + cfg.adam_eps);
            theta[i] = theta[i] - lr_t * update - lr_t * cfg.weight_decay * theta[i];
        }
        grad.fill(0.0);
    }
    Ok(())
}

/// Linearly decay from `base_lr` at step 0 to 0 at `total_steps`.
pub fn lr_at(step: u64, total_steps: u64, base_lr: f64) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::Config("lr schedule over zero total steps".into()));
    }
    debug_assert!(step <= total_steps);
    Ok(base_lr * (total_steps - step) as f64 / total_steps as f64)
}

/// [`lr_at`] with an optional linear warmup over the first `warmup_steps`.
/// With `warmup_steps = 0` (the default) this is exactly [`lr_at`].
pub fn lr_with_warmup(step: u64, total_steps: u64, base_lr: f64, warmup_steps: u64) -> Result<f64> {
    if warmup_steps > 0 && step < warmup_steps {
        return Ok(base_lr * step as f64 / warmup_steps as f64);
    }
    lr_at(step, total_steps, base_lr)
}

/// Scale all gradients so their global L2 norm is at most `max_norm`.
pub fn clip_global_norm(params: &mut ParamStore, max_norm: f64) {
    let mut sq = 0.0;
    for (_, p) in params.iter() {
        for &g in p.grad.data() {
            sq += g * g;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for (_, p) in params.iter_mut() {
            p.grad.scale(scale);
        }
    }
}
