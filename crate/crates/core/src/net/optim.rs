//! AdamW: decoupled weight decay followed by the bias-corrected Adam update.

use serde::{Deserialize, Serialize};

use super::{ModelParams, NetworkConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First/second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub m: ModelParams,
    pub v: ModelParams,
}

impl AdamState {
    pub fn new(cfg: &NetworkConfig) -> Self {
        Self {
            step: 0,
            m: ModelParams::zeros(cfg),
            v: ModelParams::zeros(cfg),
        }
    }
}

/// One optimizer step:
///   θ ← θ - lr λ θ                      (decoupled decay, applied first)
///   m ← β1 m + (1-β1) g;  v ← β2 v + (1-β2) g²
///   θ ← θ - lr · (m / (1-β1^t)) / (sqrt(v / (1-β2^t)) + ε)
pub fn adamw_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
    cfg: &AdamWConfig,
) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..ModelParams::NAMES.len() {
        let g = grads.field(i).data();
        let m = state.m.field_mut(i).data_mut();
        for (mj, gj) in m.iter_mut().zip(g) {
            *mj = cfg.beta1 * *mj + (1.0 - cfg.beta1) * gj;
        }
        let v = state.v.field_mut(i).data_mut();
        for (vj, gj) in v.iter_mut().zip(g) {
            *vj = cfg.beta2 * *vj + (1.0 - cfg.beta2) * gj * gj;
        }
        let m = state.m.field(i).data();
        let v = state.v.field(i).data();
        let theta = params.field_mut(i).data_mut();
        for j in 0..theta.len() {
            theta[j] -= cfg.lr * cfg.weight_decay * theta[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            theta[j] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
}
