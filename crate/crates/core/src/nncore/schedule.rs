//! Linear warmup followed by cosine decay.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub peak_lr: f64,
    pub min_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl LrSchedule {
    pub fn new(peak_lr: f64, min_lr: f64, warmup_steps: usize, total_steps: usize) -> Result<Self> {
        let schedule = Self {
            peak_lr,
            min_lr,
            warmup_steps,
            total_steps,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    /// Warmup over `warmup_fraction` of the run, decaying to `min_lr`.
    pub fn with_warmup_fraction(peak_lr: f64, min_lr: f64, warmup_fraction: f64, total_steps: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&warmup_fraction) {
            return Err(Error::InvalidConfig(format!(
                "warmup fraction {warmup_fraction} outside [0, 1)"
            )));
        }
        let warmup = (warmup_fraction * total_steps as f64).floor() as usize;
        Self::new(peak_lr, min_lr, warmup.min(total_steps.saturating_sub(1)), total_steps)
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(Error::InvalidConfig("schedule needs at least one step".into()));
        }
        if !(self.min_lr >= 0.0 && self.min_lr <= self.peak_lr && self.peak_lr.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "need 0 <= min_lr <= peak_lr, got min {} peak {}",
                self.min_lr, self.peak_lr
            )));
        }
        if self.warmup_steps >= self.total_steps {
            return Err(Error::InvalidConfig(format!(
                "warmup steps {} must be below total steps {}",
                self.warmup_steps, self.total_steps
            )));
        }
        Ok(())
    }

    /// Learning rate for the 0-based optimizer step `step < total_steps`.
    ///
    /// Warmup ends on `peak_lr` at step `warmup_steps - 1`; the cosine starts
    /// from `peak_lr` at `warmup_steps` and reaches `min_lr` on the last step.
    /// A single post-warmup step stays at `peak_lr`.
    pub fn lr_at(&self, step: usize) -> Result<f64> {
        if step >= self.total_steps {
            return Err(Error::InvalidInput(format!(
                "step {step} beyond schedule length {}",
                self.total_steps
            )));
        }
        if step < self.warmup_steps {
            return Ok(self.peak_lr * (step + 1) as f64 / self.warmup_steps as f64);
        }
        let span = self.total_steps - 1 - self.warmup_steps;
        if span == 0 {
            return Ok(self.peak_lr);
        }
        let progress = (step - self.warmup_steps) as f64 / span as f64;
        Ok(self.min_lr + 0.5 * (self.peak_lr - self.min_lr) * (1.0 + (PI * progress).cos()))
    }
}
