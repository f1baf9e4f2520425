use serde::{Deserialize, Serialize};

use super::encoder::{Encoder, GradientTape};
use crate::error::{Error, Result};

/// SGD with classical momentum and L2 weight decay:
///
/// ```text
/// v ← μ·v + g + wd·θ
/// θ ← θ − lr·v
/// ```
#[derive(Debug, Clone)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: GradientTape,
}

impl Sgd {
    pub fn new(encoder: &Encoder, momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: GradientTape::for_encoder(encoder),
        }
    }

    pub fn velocity(&self) -> &GradientTape {
        &self.velocity
    }

    /// Applies one update. Buffers before `first_trainable` (in tape order) are frozen.
    pub fn step(
        &mut self,
        encoder: &mut Encoder,
        grads: &GradientTape,
        lr: f64,
        first_trainable: usize,
    ) -> Result<()> {
        if !grads.matches(encoder) || !self.velocity.matches(encoder) {
            return Err(Error::config("gradient tape does not mirror encoder"));
        }
        if !grads.is_finite() {
            return Err(Error::Divergence("non-finite gradient".into()));
        }
        let (mu, wd) = (self.momentum, self.weight_decay);
        for (i, ((theta, g), v)) in encoder
            .param_buffers_mut()
            .into_iter()
            .zip(&grads.buffers)
            .zip(&mut self.velocity.buffers)
            .enumerate()
        {
            if i < first_trainable {
                continue;
            }
            for ((t, &gi), vi) in theta.iter_mut().zip(g).zip(v.iter_mut()) {
                *vi = mu * *vi + gi + wd * *t;
                *t -= lr * *vi;
            }
        }
        if !encoder.param_buffers().iter().all(|b| b.iter().all(|v| v.is_finite())) {
            return Err(Error::Divergence("parameters became non-finite".into()));
        }
        Ok(())
    }
}

/// Warmup, step decay and early stopping knobs for one training phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSchedule {
    /// Examples drawn per epoch.
    pub epoch_size: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub warmup_epochs: usize,
    /// The rate is multiplied by `lr_decay` every `step_epochs` after warmup.
    pub step_epochs: usize,
    pub lr_decay: f64,
    /// Zero means "do not train".
    pub total_epochs: usize,
    pub weight_decay: f64,
    pub momentum: f64,
    pub early_stop: bool,
    pub early_stop_patience: usize,
}

impl Default for TrainingSchedule {
    fn default() -> Self {
        Self {
            epoch_size: 2048,
            batch_size: 32,
            base_lr: 0.01,
            warmup_epochs: 10,
            step_epochs: 10,
            lr_decay: 0.01,
            total_epochs: 30,
            weight_decay: 1e-4,
            momentum: 0.9,
            early_stop: true,
            early_stop_patience: 3,
        }
    }
}

impl TrainingSchedule {
    /// Downstream finetuning defaults: we/se/te = 2/2/8, wd = 0.005, no early stop.
    pub fn finetune() -> Self {
        Self {
            epoch_size: 1600,
            batch_size: 32,
            base_lr: 0.01,
            warmup_epochs: 2,
            step_epochs: 2,
            lr_decay: 0.01,
            total_epochs: 8,
            weight_decay: 0.005,
            momentum: 0.9,
            early_stop: false,
            early_stop_patience: 3,
        }
    }

    /// Checks the invariants; `prefix` names the field path in errors.
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let f = |name: &str| format!("{prefix}{name}");
        if self.batch_size == 0 {
            return Err(Error::field(f("batch_size"), "must be at least 1"));
        }
        if self.epoch_size < self.batch_size {
            return Err(Error::field(f("epoch_size"), "must be at least batch_size"));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::field(f("base_lr"), "must be positive"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return Err(Error::field(f("lr_decay"), "must lie in (0, 1)"));
        }
        if self.step_epochs == 0 {
            return Err(Error::field(f("step_epochs"), "must be at least 1"));
        }
        if self.total_epochs > 0 && self.warmup_epochs + 1 > self.total_epochs {
            return Err(Error::field(
                f("warmup_epochs"),
                "warmup_epochs + 1 must not exceed total_epochs",
            ));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::field(f("weight_decay"), "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::field(f("momentum"), "must lie in [0, 1)"));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::field(f("early_stop_patience"), "must be at least 1"));
        }
        Ok(())
    }

    /// Learning rate for a zero-based epoch.
    ///
    /// Warmup ramps linearly, `lr·(epoch+1)/we`, so the last warmup epoch and
    /// epoch `we` both run at the base rate. Afterwards
    /// `lr·γ^⌊(epoch−we)/se⌋`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch < self.warmup_epochs {
            return self.base_lr * (epoch + 1) as f64 / self.warmup_epochs as f64;
        }
        let steps = (epoch - self.warmup_epochs) / self.step_epochs;
        self.base_lr * self.lr_decay.powi(steps as i32)
    }
}

/// True when the last `patience` epoch-to-epoch changes are all strict increases.
pub fn early_stop_check(val_losses: &[f64], patience: usize) -> bool {
    if patience == 0 || val_losses.len() < patience + 1 {
        return false;
    }
    val_losses[val_losses.len() - patience - 1..]
        .windows(2)
        .all(|w| w[1] > w[0])
}
