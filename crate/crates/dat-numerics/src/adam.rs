//! Adam with bias correction, restricted to a parameter mask.

use crate::error::{NumericsError, Result};
use crate::mask::ParamMask;

/// Optimizer moments and hyperparameters for one flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    pub step_count: u64,
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl AdamState {
    pub fn new(param_count: usize, lr: f32, beta1: f32, beta2: f32, eps: f32) -> Self {
        Self {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step_count: 0,
            lr,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// One Adam step applied only at the masked indices.
///
/// Parameters and moments outside the mask are left bitwise untouched:
/// frozen entries are not decayed, so re-running a stream reproduces them
/// exactly. The step counter advances once per call regardless of the mask.
pub fn adam_step(
    params: &mut [f32],
    grads: &[f32],
    state: &mut AdamState,
    mask: &ParamMask,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.len() {
        return Err(NumericsError::Contract(format!(
            "adam_step length mismatch: params {}, grads {}, moments {}",
            params.len(),
            grads.len(),
            state.len()
        )));
    }
    if let Some(&max) = mask.indices().last() {
        if max as usize >= params.len() {
            return Err(NumericsError::Contract(format!(
                "mask index {max} out of range for {} parameters",
                params.len()
            )));
        }
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for &idx in mask.indices() {
        let i = idx as usize;
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}
