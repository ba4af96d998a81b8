use serde::{Deserialize, Serialize};

use super::ModelParams;
use crate::Result;

/// Adam hyper-parameters plus a step-decay learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Schedule steps between decays.
    pub decay_period: u64,
    pub gamma: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay_period: 10,
            gamma: 0.5,
        }
    }
}

/// Moment accumulators mirroring a [`ModelParams`].
///
/// Two counters are kept apart: `step` drives bias correction and advances
/// on every update; `schedule_step` drives the learning-rate decay and is
/// advanced by the caller (once per global round in this crate).
#[derive(Debug, Clone)]
pub struct OptimState {
    pub config: AdamConfig,
    m: ModelParams,
    v: ModelParams,
    step: u64,
    schedule_step: u64,
}

impl OptimState {
    pub fn new(config: AdamConfig, like: &ModelParams) -> Self {
        Self {
            config,
            m: like.zeros_like(),
            v: like.zeros_like(),
            step: 0,
            schedule_step: 0,
        }
    }

    pub fn with_schedule_step(mut self, schedule_step: u64) -> Self {
        self.schedule_step = schedule_step;
        self
    }

    pub fn advance_schedule(&mut self) {
        self.schedule_step += 1;
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// `lr · γ^⌊schedule_step / period⌋`
    pub fn lr(&self) -> f64 {
        let period = self.config.decay_period.max(1);
        let decays = (self.schedule_step / period) as i32;
        self.config.lr * self.config.gamma.powi(decays)
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) -> Result<()> {
        params.ensure_compatible(grads)?;
        params.ensure_compatible(&self.m)?;
        self.step += 1;
        let AdamConfig {
            beta1, beta2, eps, ..
        } = self.config;
        let lr = self.lr();
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, &g), m), v) in params
            .values_mut()
            .zip(grads.values())
            .zip(self.m.values_mut())
            .zip(self.v.values_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, opt: &mut OptimState) -> Result<()> {
    opt.step(params, grads)
}
