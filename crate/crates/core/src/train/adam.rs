use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradcheck::Parameters;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm ceiling; `f64::INFINITY` disables clipping.
    pub clip_norm: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64, clip_norm: f64) -> Self {
        AdamConfig {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm,
        }
    }
}

/// First and second moment estimates, one tensor per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new<P: Parameters>(params: &P) -> Self {
        let mut m = Vec::new();
        params.visit(&mut |_, t| m.push(Tensor::zeros(t.shape())));
        AdamState {
            v: m.clone(),
            m,
            t: 0,
        }
    }
}

/// Euclidean norm over every gradient scalar.
pub fn global_norm<P: Parameters>(grads: &P) -> f64 {
    let mut sq = 0.0;
    grads.visit(&mut |_, t| sq += t.data().iter().map(|g| g * g).sum::<f64>());
    sq.sqrt()
}

/// Rescale `grads` in place so their global norm is at most `clip_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<P: Parameters>(grads: &mut P, clip_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > clip_norm {
        let factor = clip_norm / norm;
        grads.visit_mut(&mut |_, t| t.data_mut().iter_mut().for_each(|g| *g *= factor));
    }
    norm
}

/// One bias-corrected Adam update after global-norm clipping. `grads` is
/// clipped in place. Returns the pre-clip gradient norm.
pub fn adam_step<P: Parameters>(
    params: &mut P,
    grads: &mut P,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<f64> {
    let mut bad = None;
    grads.visit(&mut |name, t| {
        if bad.is_none() && !t.is_finite() {
            bad = Some(name.to_owned());
        }
    });
    if let Some(name) = bad {
        return Err(Error::NonFinite(format!("gradient of {name}")));
    }
    let norm = clip_global_norm(grads, cfg.clip_norm);

    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    let mut gs = Vec::new();
    grads.visit(&mut |_, t| gs.push(t.data().to_vec()));
    let mut i = 0;
    let AdamState { m, v, .. } = state;
    params.visit_mut(&mut |_, p| {
        let (m, v, g) = (m[i].data_mut(), v[i].data_mut(), &gs[i]);
        for (k, theta) in p.data_mut().iter_mut().enumerate() {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            *theta -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        i += 1;
    });
    Ok(norm)
}
