use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{ParamSet, Tensor};

/// Piecewise-constant learning rate: `base_lr * decay_factor^floor(step / decay_every)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub decay_factor: f64,
    pub decay_every: u64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            base_lr: 0.005,
            decay_factor: 0.1,
            decay_every: 10_000,
        }
    }
}

impl LrSchedule {
    pub fn lr_at(&self, step: u64) -> f64 {
        let stage = (step / self.decay_every.max(1)) as i32;
        self.base_lr * self.decay_factor.powi(stage)
    }
}

/// Plain (uncentered) RMSProp.
#[derive(Clone, Debug)]
pub struct RmsPropState {
    pub mean_square: Vec<Tensor>,
    pub decay_rho: f64,
    pub epsilon: f64,
    pub schedule: LrSchedule,
    pub step_count: u64,
}

impl RmsPropState {
    pub fn new(params: &ParamSet, schedule: LrSchedule) -> Self {
        Self {
            mean_square: params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect(),
            decay_rho: 0.9,
            epsilon: 1e-8,
            schedule,
            step_count: 0,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.schedule.lr_at(self.step_count)
    }

    /// One optimizer step over every tensor, then advances the step count once.
    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) -> Result<()> {
        let lr = self.learning_rate();
        for id in params.ids() {
            let grad = grads.get(id);
            if !grad.is_finite() {
                return Err(Error::Training {
                    at: params.name(id).to_string(),
                    reason: "non-finite gradient".into(),
                });
            }
            rmsprop_update(
                params.get_mut(id),
                grad,
                &mut self.mean_square[id.index()],
                self.decay_rho,
                self.epsilon,
                lr,
            )?;
        }
        self.step_count += 1;
        Ok(())
    }
}

/// `s <- rho s + (1 - rho) g^2`, `p <- p - lr g / (sqrt(s) + eps)`.
pub fn rmsprop_update(
    param: &mut Tensor,
    grad: &Tensor,
    mean_square: &mut Tensor,
    rho: f64,
    eps: f64,
    lr: f64,
) -> Result<()> {
    if param.shape() != grad.shape() || param.shape() != mean_square.shape() {
        return Err(Error::Dimension {
            context: "rmsprop parameter/gradient",
            left: param.shape().to_vec(),
            right: grad.shape().to_vec(),
        });
    }
    for ((p, &g), s) in param.data_mut().iter_mut().zip(grad.data()).zip(mean_square.data_mut()) {
        let g = f64::from(g);
        let ms = rho * f64::from(*s) + (1.0 - rho) * g * g;
        *s = ms as f32;
        *p = (f64::from(*p) - lr * g / (ms.sqrt() + eps)) as f32;
    }
    Ok(())
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut ParamSet, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}
