use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global L2 norm limit applied to the gradient before the update.
    pub max_grad_norm: Option<f64>,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_grad_norm: None,
        }
    }
}

/// Rescales `grads` in place so its global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// One bias-corrected Adam update (clipping first, when configured).
/// Returns the pre-clip gradient norm.
pub fn adam_step(store: &mut ParamStore, grads: &mut [f64], config: &AdamConfig) -> Result<f64> {
    if grads.len() != store.len() {
        return Err(Error::shape(format!("{} gradients for {} parameters", grads.len(), store.len())));
    }
    if !(config.lr > 0.0) {
        return Err(Error::usage("learning rate must be positive"));
    }
    let norm = match config.max_grad_norm {
        Some(max) => clip_global_norm(grads, max),
        None => grads.iter().map(|g| g * g).sum::<f64>().sqrt(),
    };
    store.step += 1;
    let t = store.step as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);
    for (((p, m), v), &g) in store
        .data
        .iter_mut()
        .zip(store.first_moment.iter_mut())
        .zip(store.second_moment.iter_mut())
        .zip(grads.iter())
    {
        *m = config.beta1 * *m + (1.0 - config.beta1) * g;
        *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= config.lr * m_hat / (v_hat.sqrt() + config.eps);
    }
    Ok(norm)
}
