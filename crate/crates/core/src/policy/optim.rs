//! AdamW with decoupled weight decay, and a linear-warmup cosine schedule.

use std::f64::consts::PI;

use super::PolicyError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { lr: 4e-5, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamWState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }
}

/// One in-place update: decay, moment update, bias correction, step.
pub fn adamw_step(
    params: &mut [f64],
    grad: &[f64],
    state: &mut AdamWState,
    cfg: &AdamWConfig,
    lr: f64,
) -> Result<(), PolicyError> {
    if params.len() != grad.len() || params.len() != state.m.len() || params.len() != state.v.len() {
        return Err(PolicyError::ShapeMismatch { params: params.len(), grad: grad.len() });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = grad[i];
        params[i] -= lr * cfg.weight_decay * params[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

pub fn warmup_steps(total_steps: u64, warmup_ratio: f64) -> u64 {
    (warmup_ratio.max(0.0) * total_steps as f64).ceil() as u64
}

/// Linear warmup to `base_lr` over `ceil(warmup_ratio * total)` steps,
/// then cosine decay reaching 0 at `total_steps`.
pub fn lr_schedule(step: u64, total_steps: u64, base_lr: f64, warmup_ratio: f64) -> f64 {
    let warmup = warmup_steps(total_steps, warmup_ratio).min(total_steps);
    if step < warmup {
        return base_lr * step as f64 / warmup as f64;
    }
    if total_steps <= warmup {
        return if step >= total_steps { 0.0 } else { base_lr };
    }
    let progress = ((step - warmup) as f64 / (total_steps - warmup) as f64).min(1.0);
    base_lr * 0.5 * (1.0 + (PI * progress).cos())
}
