//! AdamW with global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::router::RouterParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
            clip_norm: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first_moment: RouterParams,
    pub second_moment: RouterParams,
    pub step_count: u64,
    pub hyper: AdamWConfig,
}

impl OptimizerState {
    pub fn new(params: &RouterParams, hyper: AdamWConfig) -> Self {
        Self {
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            step_count: 0,
            hyper,
        }
    }
}

pub fn global_norm(grads: &RouterParams) -> f64 {
    grads
        .tensors()
        .iter()
        .flat_map(|(_, t)| t.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Rescales all gradients by `clip_norm / ‖g‖` when `‖g‖ > clip_norm`.
/// Returns the pre-clip norm.
pub fn clip_gradients(grads: &mut RouterParams, clip_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > clip_norm {
        let scale = clip_norm / norm;
        for (_, t) in grads.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= scale);
        }
    }
    norm
}

/// One decoupled-weight-decay Adam update with bias correction.
///
/// `p ← p − lr·wd·p`, then `p ← p − lr · m̂ / (√v̂ + ε)`.
pub fn adamw_step(params: &mut RouterParams, grads: &RouterParams, state: &mut OptimizerState) -> Result<()> {
    params.check_shapes(grads.dim(), grads.pool_size())?;
    let h = state.hyper;
    let t = state.step_count + 1;
    let bc1 = 1.0 - h.beta1.powi(t as i32);
    let bc2 = 1.0 - h.beta2.powi(t as i32);

    let mut updated = params.clone();
    let mut m_all = state.first_moment.clone();
    let mut v_all = state.second_moment.clone();
    for ((((name, p), (_, g)), (_, m)), (_, v)) in updated
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(m_all.tensors_mut())
        .zip(v_all.tensors_mut())
    {
        for i in 0..p.len() {
            m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
            v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= h.lr * h.weight_decay * p[i];
            p[i] -= h.lr * m_hat / (v_hat.sqrt() + h.epsilon);
            if !p[i].is_finite() {
                return Err(Error::NonFinite(format!("AdamW update of {name}")));
            }
        }
    }
    *params = updated;
    state.first_moment = m_all;
    state.second_moment = v_all;
    state.step_count = t;
    Ok(())
}
