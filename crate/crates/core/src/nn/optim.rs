use super::ParamStore;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    /// Per-epoch exponential decay factor α.
    pub lr_decay: f64,
    pub grad_clip_norm: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            lr_decay: 0.999,
            grad_clip_norm: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!("lr_decay {} outside (0, 1]", self.lr_decay)));
        }
        if !(self.grad_clip_norm > 0.0) {
            return Err(Error::Config(format!("grad_clip_norm {} must be positive", self.grad_clip_norm)));
        }
        Ok(())
    }

    pub fn effective_lr(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi(epoch as i32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub lr: f64,
}

/// Rescales all gradients so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(store: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = store.grad_norm();
    if norm > max_norm {
        let s = max_norm / norm;
        for p in store.iter_mut() {
            p.grad.iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl Adam {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|p| vec![0.0; p.value.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// Clips, then applies one bias-corrected Adam update with the decayed
    /// learning rate for `epoch`. Gradients are left clipped, not zeroed.
    pub fn step(&mut self, store: &mut ParamStore, config: &OptimizerConfig, epoch: usize) -> Result<StepStats> {
        if let Some(p) = store.iter().find(|p| p.grad.iter().any(|g| !g.is_finite())) {
            return Err(Error::NonFiniteGradient { param: p.name.clone() });
        }
        let grad_norm = clip_grad_norm(store, config.grad_clip_norm);
        let lr = config.effective_lr(epoch);
        self.t += 1;
        let bc1 = 1.0 - config.beta1.powi(self.t as i32);
        let bc2 = 1.0 - config.beta2.powi(self.t as i32);
        for (i, p) in store.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (k, x) in p.value.data_mut().iter_mut().enumerate() {
                let g = p.grad[k];
                m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g;
                v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g * g;
                let mh = m[k] / bc1;
                let vh = v[k] / bc2;
                *x -= lr * mh / (vh.sqrt() + config.epsilon);
            }
        }
        Ok(StepStats { grad_norm, lr })
    }
}
