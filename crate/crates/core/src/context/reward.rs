use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exploration coefficient `c(step) = c_init * max(0, 1 - step / M)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSchedule {
    pub c_init: f64,
    /// Decay horizon `M` in environment steps.
    pub decay_steps: u64,
}

impl RewardSchedule {
    pub fn new(c_init: f64, decay_steps: u64) -> Result<Self> {
        if !(c_init >= 0.0) || decay_steps == 0 {
            return Err(Error::Config("reward schedule needs c_init >= 0 and M > 0".into()));
        }
        Ok(RewardSchedule { c_init, decay_steps })
    }

    pub fn coefficient(&self, step: u64) -> f64 {
        if step >= self.decay_steps {
            return 0.0;
        }
        self.c_init * (1.0 - step as f64 / self.decay_steps as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RewardMode {
    Training,
    /// Online adaptation: true peer identities are unknown, so the
    /// exploration term is never added.
    Adaptation,
}

/// `r + c(step) * r_e` during training, `r` during adaptation.
pub fn mixed_reward(task: f64, exploration: f64, step: u64, schedule: &RewardSchedule, mode: RewardMode) -> f64 {
    match mode {
        RewardMode::Training => task + schedule.coefficient(step) * exploration,
        RewardMode::Adaptation => task,
    }
}
