use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// ε is held at `eps_start` through warm-up, then decays exponentially so that it reaches
/// `eps_min` exactly `decay_horizon` steps after warm-up, and stays there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub eps_start: f64,
    pub eps_min: f64,
    pub warmup_steps: u64,
    pub decay_horizon: u64,
}

impl EpsilonSchedule {
    pub fn new(
        eps_start: f64,
        eps_min: f64,
        warmup_steps: u64,
        decay_horizon: u64,
    ) -> Result<Self> {
        if !(eps_min > 0.0 && eps_min <= eps_start && eps_start <= 1.0) {
            return Err(Error::Config(format!(
                "epsilon schedule needs 0 < eps_min <= eps_start <= 1, got {eps_min} and {eps_start}"
            )));
        }
        Ok(Self {
            eps_start,
            eps_min,
            warmup_steps,
            decay_horizon,
        })
    }

    /// Decay rate per step after warm-up.
    pub fn rate(&self) -> f64 {
        if self.decay_horizon == 0 {
            f64::INFINITY
        } else {
            (self.eps_start / self.eps_min).ln() / self.decay_horizon as f64
        }
    }

    pub fn epsilon_at(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            return self.eps_start;
        }
        let since = step - self.warmup_steps;
        if since >= self.decay_horizon {
            return self.eps_min;
        }
        (self.eps_start * (-self.rate() * since as f64).exp()).clamp(self.eps_min, self.eps_start)
    }
}
