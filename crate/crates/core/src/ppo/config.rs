use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::context::{EncoderSpec, RewardSchedule};
use crate::error::{Error, Result};
use crate::game::EnvKind;

/// PPO and PACE training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoConfig {
    pub lr: f64,
    pub clip_eps: f64,
    pub entropy_coef: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    /// Environment steps per update.
    pub batch_size: usize,
    pub epochs: usize,
    pub minibatches: usize,
    /// Global L2 gradient clip.
    pub max_grad_norm: f64,
    pub value_coef: f64,
    pub aux_weight: f64,
    pub total_steps: u64,
    /// Episodes per meta-episode; the context is cleared once it holds this many.
    pub n_eps: usize,
    /// Encoder warm-up steps, counted inside `total_steps`.
    pub warmup_steps: u64,
    pub reward: RewardSchedule,
    pub normalize_advantages: bool,
    pub actor_hidden: Vec<usize>,
    pub encoder: EncoderSpec,
}

impl PpoConfig {
    pub fn kuhn() -> Self {
        PpoConfig {
            lr: 2e-4,
            clip_eps: 0.2,
            entropy_coef: 5e-4,
            gamma: 0.99,
            gae_lambda: 0.95,
            batch_size: 80_000,
            epochs: 15,
            minibatches: 12,
            max_grad_norm: 2.0,
            value_coef: 0.5,
            aux_weight: 1.0,
            total_steps: 5_000_000,
            n_eps: 100,
            warmup_steps: 100_000,
            reward: RewardSchedule {
                c_init: 0.01,
                decay_steps: 4_000_000,
            },
            normalize_advantages: true,
            actor_hidden: vec![128, 128],
            encoder: EncoderSpec::kuhn(),
        }
    }

    pub fn predator_prey() -> Self {
        PpoConfig {
            lr: 1e-3,
            clip_eps: 0.2,
            entropy_coef: 0.03,
            gamma: 0.99,
            gae_lambda: 0.95,
            batch_size: 64_000,
            epochs: 4,
            minibatches: 16,
            max_grad_norm: 15.0,
            value_coef: 0.5,
            aux_weight: 1.0,
            total_steps: 15_000_000,
            n_eps: 5,
            warmup_steps: 500_000,
            reward: RewardSchedule {
                c_init: 0.1,
                decay_steps: 15_000_000,
            },
            normalize_advantages: true,
            actor_hidden: vec![128, 128],
            encoder: EncoderSpec::predator_prey(),
        }
    }

    pub fn for_env(kind: EnvKind) -> Self {
        match kind {
            EnvKind::Kuhn => Self::kuhn(),
            EnvKind::PredatorPreyW => Self::predator_prey(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip_eps must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma and gae_lambda must lie in [0, 1]");
        }
        if self.batch_size == 0 || self.epochs == 0 || self.minibatches == 0 || self.n_eps == 0 {
            return bad("batch_size, epochs, minibatches and n_eps must be positive");
        }
        if !(self.max_grad_norm > 0.0) {
            return bad("max_grad_norm must be positive");
        }
        if self.entropy_coef < 0.0 || self.value_coef < 0.0 || self.aux_weight < 0.0 {
            return bad("loss coefficients must be non-negative");
        }
        if self.warmup_steps > self.total_steps {
            return bad("warmup_steps exceeds total_steps");
        }
        if self.encoder.d_z == 0 {
            return bad("encoder d_z must be positive");
        }
        RewardSchedule::new(self.reward.c_init, self.reward.decay_steps)?;
        Ok(())
    }
}

/// Training variants differing only in configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Pace,
    /// Exploration reward removed, identification task kept.
    PaceReward,
    /// Neither exploration reward nor identification task.
    PaceRewardAux,
}

impl Preset {
    pub fn apply(self, config: &mut PpoConfig) {
        match self {
            Preset::Pace => {}
            Preset::PaceReward => config.reward.c_init = 0.0,
            Preset::PaceRewardAux => {
                config.reward.c_init = 0.0;
                config.aux_weight = 0.0;
                config.warmup_steps = 0;
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Pace => "pace",
            Preset::PaceReward => "pace-reward",
            Preset::PaceRewardAux => "pace-reward-aux",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pace" => Ok(Preset::Pace),
            "pace-reward" => Ok(Preset::PaceReward),
            "pace-reward-aux" => Ok(Preset::PaceRewardAux),
            other => Err(Error::Config(format!("unknown preset `{other}`"))),
        }
    }
}
