use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::model::{Gradients, Linear, MlpModel};
use crate::error::{Error, Result};

pub const DEFAULT_MOMENTUM: f64 = 0.9;
pub const DEFAULT_WEIGHT_DECAY: f64 = 1e-5;

/// Heavy-ball SGD with coupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    pub momentum: f64,
    pub weight_decay: f64,
    pub buffers: Vec<Linear>,
}

impl SgdState {
    pub fn new(model: &MlpModel, momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            buffers: model.layers.iter().map(Linear::zeros_like).collect(),
        }
    }

    pub fn with_defaults(model: &MlpModel) -> Self {
        Self::new(model, DEFAULT_MOMENTUM, DEFAULT_WEIGHT_DECAY)
    }
}

/// `buf ← μ·buf + (g + λ·θ)`, then `θ ← θ − lr·buf`, for every parameter.
pub fn sgd_step(model: &mut MlpModel, grads: &Gradients, state: &mut SgdState, lr: f64) -> Result<()> {
    if grads.layers.len() != model.layers.len() || state.buffers.len() != model.layers.len() {
        return Err(Error::DimensionMismatch("layer counts differ between model, grads and state".into()));
    }
    let (mu, lambda) = (state.momentum, state.weight_decay);
    for ((layer, g), buf) in model.layers.iter_mut().zip(&grads.layers).zip(&mut state.buffers) {
        if layer.weight.shape() != g.weight.shape()
            || layer.weight.shape() != buf.weight.shape()
            || layer.bias.len() != g.bias.len()
            || layer.bias.len() != buf.bias.len()
        {
            return Err(Error::DimensionMismatch("parameter shapes differ".into()));
        }
        let params = layer.weight.as_mut_slice().iter_mut().chain(layer.bias.iter_mut());
        let gs = g.weight.as_slice().iter().chain(&g.bias);
        let bs = buf.weight.as_mut_slice().iter_mut().chain(buf.bias.iter_mut());
        for ((p, g), b) in params.zip(gs).zip(bs) {
            *b = mu * *b + (g + lambda * *p);
            *p -= lr * *b;
        }
    }
    Ok(())
}

/// One-cycle learning rate: cosine warm-up from `max_lr/start_div` to `max_lr`,
/// then cosine annealing down to `max_lr/final_div`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneCycleSchedule {
    pub max_lr: f64,
    pub total_steps: usize,
    pub warmup_fraction: f64,
    pub start_div: f64,
    pub final_div: f64,
}

impl OneCycleSchedule {
    pub fn new(max_lr: f64, total_steps: usize) -> Self {
        Self {
            max_lr,
            total_steps,
            warmup_fraction: 0.3,
            start_div: 25.0,
            final_div: 1e4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_lr > 0.0 && self.max_lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("max_lr must be > 0, got {}", self.max_lr)));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return Err(Error::InvalidConfig(format!(
                "warmup_fraction must be in [0, 1], got {}",
                self.warmup_fraction
            )));
        }
        if !(self.start_div > 0.0 && self.final_div > 0.0) {
            return Err(Error::InvalidConfig("start_div and final_div must be > 0".into()));
        }
        Ok(())
    }

    fn warmup_end(&self) -> f64 {
        self.warmup_fraction * self.total_steps as f64
    }

    pub fn lr_at(&self, step: usize) -> Result<f64> {
        if step > self.total_steps {
            return Err(Error::InvalidArgument(format!(
                "step {step} beyond schedule length {}",
                self.total_steps
            )));
        }
        let initial = self.max_lr / self.start_div;
        let last = self.max_lr / self.final_div;
        let t = step as f64;
        let warm = self.warmup_end();
        let lr = if t <= warm && warm > 0.0 {
            cosine_interp(initial, self.max_lr, t / warm)
        } else {
            let span = self.total_steps as f64 - warm;
            if span <= 0.0 {
                self.max_lr
            } else {
                cosine_interp(self.max_lr, last, (t - warm) / span)
            }
        };
        Ok(lr)
    }
}

fn cosine_interp(from: f64, to: f64, pct: f64) -> f64 {
    let w = 0.5 * (1.0 + (PI * pct).cos());
    from * w + to * (1.0 - w)
}
