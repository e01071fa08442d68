//! Adam updates with bias correction over the parameter groups.

use serde::{Deserialize, Serialize};

use super::model::{GcnGrads, GcnParams};
use super::GcnError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub cfg: AdamConfig,
    pub first: GcnParams,
    pub second: GcnParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &GcnParams, cfg: AdamConfig) -> Self {
        Self {
            cfg,
            first: params.zeros_like(),
            second: params.zeros_like(),
            step: 0,
        }
    }
}

/// One Adam step: updates `params` in place from `grads` and advances the
/// moment estimates. Deterministic; two sequential runs from the same
/// state are bit-identical.
pub fn adam_step(
    params: &mut GcnParams,
    grads: &GcnGrads,
    state: &mut AdamState,
) -> Result<(), GcnError> {
    if !params.same_shape(grads) || !params.same_shape(&state.first) {
        return Err(GcnError::ShapeMismatch {
            context: "parameters, gradients, and Adam moments must share shapes".into(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let cfg = state.cfg;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);

    let mut p = params.as_mut_slices();
    let g = grads.as_slices();
    let mut m = state.first.as_mut_slices();
    let mut v = state.second.as_mut_slices();
    for group in 0..p.len() {
        let (pg, gg) = (&mut p[group], g[group]);
        let (mg, vg) = (&mut m[group], &mut v[group]);
        for i in 0..pg.len() {
            let grad = gg[i];
            mg[i] = cfg.beta1 * mg[i] + (1.0 - cfg.beta1) * grad;
            vg[i] = cfg.beta2 * vg[i] + (1.0 - cfg.beta2) * grad * grad;
            let m_hat = mg[i] / bias1;
            let v_hat = vg[i] / bias2;
            pg[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}
