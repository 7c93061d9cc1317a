//! Linear warmup followed by cosine annealing to zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub warmup_iters: usize,
    pub total_iters: usize,
    pub peak_lr: f64,
}

impl Default for ScheduleConfig {
    fn default() -> ScheduleConfig {
        ScheduleConfig {
            warmup_iters: 250,
            total_iters: 4000,
            // LARS scales each step by trust_coeff (1e-3), so the nominal
            // peak sits well above typical SGD ranges
            peak_lr: 0.5,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_iters == 0 || self.warmup_iters >= self.total_iters {
            return Err(Error::InvalidConfig(format!(
                "need 0 < warmup_iters < total_iters, got {}/{}",
                self.warmup_iters, self.total_iters
            )));
        }
        Ok(())
    }

    /// Learning rate at iteration `it`, 0 <= it <= total_iters.
    pub fn lr_at(&self, it: usize) -> Result<f64> {
        if it > self.total_iters {
            return Err(Error::OutOfRange {
                it,
                total: self.total_iters,
            });
        }
        if it <= self.warmup_iters {
            return Ok(self.peak_lr * it as f64 / self.warmup_iters as f64);
        }
        let progress =
            (it - self.warmup_iters) as f64 / (self.total_iters - self.warmup_iters) as f64;
        Ok(self.peak_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
    }
}
