use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::{ModelDims, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Step count and both moment accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub first: ParamSet,
    pub second: ParamSet,
}

impl AdamState {
    pub fn new(dims: &ModelDims) -> Self {
        AdamState {
            step: 0,
            first: ParamSet::zeros(dims),
            second: ParamSet::zeros(dims),
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &ParamSet,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    for ((name, p), ((_, g), ((_, m), (_, v)))) in params.tensors().into_iter().zip(
        grads.tensors().into_iter().zip(
            state
                .first
                .tensors()
                .into_iter()
                .zip(state.second.tensors()),
        ),
    ) {
        if p.shape() != g.shape() || p.shape() != m.shape() || p.shape() != v.shape() {
            return Err(crate::error::Error::shape(name, p.shape(), g.shape()));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);

    let grads = grads.tensors();
    let firsts = state.first.tensors_mut();
    let seconds = state.second.tensors_mut();
    for (((p, (_, g)), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(grads)
        .zip(firsts)
        .zip(seconds)
    {
        let (m, v) = (m.data_mut(), v.data_mut());
        for (i, (p, &g)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
