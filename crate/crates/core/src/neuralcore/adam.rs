//! Bias-corrected Adam over MLP parameters.

use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpGrads};
use crate::error::CoreError;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamParams {
    pub fn with_lr(lr: f64) -> Self {
        AdamParams { lr, ..Default::default() }
    }
}

/// Moment accumulators; flat over the network's parameters in layer order
/// (weights then biases per layer), zero-initialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    /// Updates skipped because the gradient was non-finite.
    pub skipped: u64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        AdamState { m: vec![0.0; param_count], v: vec![0.0; param_count], t: 0, skipped: 0 }
    }

    pub fn for_mlp(mlp: &Mlp) -> Self {
        Self::new(mlp.param_count())
    }
}

/// One Adam step over an MLP. A non-finite gradient skips the whole update
/// and counts the incident; parameters and moments stay untouched.
pub fn adam_update(
    mlp: &mut Mlp,
    grads: &MlpGrads,
    state: &mut AdamState,
    params: &AdamParams,
) -> Result<()> {
    if grads.layers.len() != mlp.layers.len() {
        return Err(CoreError::shape("gradient layout does not match network"));
    }
    let count = mlp.param_count();
    if state.m.len() != count {
        return Err(CoreError::shape("optimizer state does not match network"));
    }
    if !grads.is_finite() {
        state.skipped += 1;
        return Ok(());
    }

    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - params.beta1.powi(t);
    let bc2 = 1.0 - params.beta2.powi(t);

    let mut k = 0usize;
    for (layer, grad) in mlp.layers.iter_mut().zip(grads.layers.iter()) {
        for (p, g) in layer.w.iter_mut().zip(grad.w.iter()) {
            adam_scalar(p, *g, &mut state.m[k], &mut state.v[k], bc1, bc2, params);
            k += 1;
        }
        for (p, g) in layer.b.iter_mut().zip(grad.b.iter()) {
            adam_scalar(p, *g, &mut state.m[k], &mut state.v[k], bc1, bc2, params);
            k += 1;
        }
    }
    mlp.revision += 1;
    Ok(())
}

#[inline]
fn adam_scalar(
    p: &mut f64,
    g: f64,
    m: &mut f64,
    v: &mut f64,
    bc1: f64,
    bc2: f64,
    params: &AdamParams,
) {
    *m = params.beta1 * *m + (1.0 - params.beta1) * g;
    *v = params.beta2 * *v + (1.0 - params.beta2) * g * g;
    let m_hat = *m / bc1;
    let v_hat = *v / bc2;
    *p -= params.lr * m_hat / (v_hat.sqrt() + params.eps);
}

/// Adam over a bare parameter vector (used for learned log-std heads).
pub fn adam_update_vec(
    params_vec: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    params: &AdamParams,
) -> Result<()> {
    if params_vec.len() != grads.len() || state.m.len() != params_vec.len() {
        return Err(CoreError::shape("vector optimizer shape mismatch"));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        state.skipped += 1;
        return Ok(());
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - params.beta1.powi(t);
    let bc2 = 1.0 - params.beta2.powi(t);
    for (k, (p, g)) in params_vec.iter_mut().zip(grads.iter()).enumerate() {
        adam_scalar(p, *g, &mut state.m[k], &mut state.v[k], bc1, bc2, params);
    }
    Ok(())
}

/// Scale gradients down to the given global L2 norm if they exceed it.
pub fn clip_grad_norm(grads: &mut MlpGrads, max_norm: f64) -> f64 {
    let norm = grads.l2_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}
