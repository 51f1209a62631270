use std::io::Write;
use std::sync::Arc;

use serde_json::json;

use super::config::PpoConfig;
use super::model::{Model, ModelSpec};
use super::rollout::{collect_batch, TrainState};
use super::update::{ppo_update, UpdateMode, UpdateStats};
use crate::error::{Error, Result};
use crate::nn::{Checkpoint, ParamStore};
use crate::pool::PoolSpec;
use crate::predator_prey::PpConfig;
use crate::rng::{stream, Purpose, Stream};

/// One row of the training diagnostics CSV.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Diagnostics {
    pub global_step: u64,
    pub mean_task_return: f64,
    pub mean_exploration_reward: f64,
    pub c: f64,
    pub aux_loss: f64,
    pub aux_accuracy: f64,
    pub entropy: f64,
    pub value_loss: f64,
}

pub const DIAGNOSTICS_HEADER: [&str; 8] = [
    "global_step",
    "mean_task_return",
    "mean_exploration_reward",
    "c",
    "aux_loss",
    "aux_accuracy",
    "entropy",
    "value_loss",
];

pub struct DiagnosticsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> DiagnosticsWriter<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(DIAGNOSTICS_HEADER)?;
        Ok(DiagnosticsWriter { inner })
    }

    pub fn write(&mut self, d: &Diagnostics) -> Result<()> {
        self.inner.write_record([
            d.global_step.to_string(),
            d.mean_task_return.to_string(),
            d.mean_exploration_reward.to_string(),
            d.c.to_string(),
            d.aux_loss.to_string(),
            d.aux_accuracy.to_string(),
            d.entropy.to_string(),
            d.value_loss.to_string(),
        ])?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner
            .into_inner()
            .map_err(|e| Error::Io(e.into_error()))
    }
}

/// Warm-up followed by PPO updates against every training tuple of a pool.
pub struct Trainer {
    pub model: Model,
    pub store: ParamStore,
    pub config: PpoConfig,
    pub seed: u64,
    state: TrainState,
    shuffle: Stream,
    updates: u64,
}

impl Trainer {
    pub fn new(config: PpoConfig, pool: &PoolSpec, pp: Arc<PpConfig>, seed: u64) -> Result<Self> {
        config.validate()?;
        let spec = ModelSpec {
            env: pool.env,
            encoder: config.encoder.clone(),
            actor_hidden: config.actor_hidden.clone(),
            slot_cardinalities: pool.slot_cardinalities.clone(),
        };
        let (model, mut store) = Model::build(&spec);
        model.init(&mut store.data, seed);
        let state = TrainState::new(&model, pool, &pp, config.n_eps, seed)?;
        Ok(Trainer {
            model,
            store,
            config,
            seed,
            state,
            shuffle: stream(seed, Purpose::Shuffle, 0),
            updates: 0,
        })
    }

    pub fn global_step(&self) -> u64 {
        self.state.global_step
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn is_done(&self) -> bool {
        self.state.global_step >= self.config.total_steps
    }

    pub fn in_warmup(&self) -> bool {
        self.state.global_step < self.config.warmup_steps
    }

    /// One collection phase and one update.
    pub fn step(&mut self) -> Result<(Diagnostics, UpdateStats)> {
        if self.is_done() {
            return Err(Error::usage("training budget already spent"));
        }
        let mode = if self.in_warmup() {
            UpdateMode::AuxOnly
        } else {
            UpdateMode::Full
        };
        let remaining = self.config.total_steps - self.state.global_step;
        let steps = (self.config.batch_size as u64).min(remaining) as usize;
        let mut batch = collect_batch(&mut self.state, &self.model, &self.store.data, &self.config, steps)?;
        batch.compute_advantages(&self.config)?;
        let stats = ppo_update(&self.model, &mut self.store, &batch, &self.config, mode, &mut self.shuffle)?;
        self.state.refresh(&self.model, &self.store.data)?;
        self.updates += 1;
        let mean = |v: &[f64]| {
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        let diag = Diagnostics {
            global_step: self.state.global_step,
            mean_task_return: mean(&batch.episode_returns),
            mean_exploration_reward: mean(&batch.exploration_rewards),
            c: batch.coefficient,
            aux_loss: stats.loss.aux,
            aux_accuracy: stats.loss.aux_accuracy,
            entropy: stats.loss.entropy,
            value_loss: stats.loss.value,
        };
        Ok((diag, stats))
    }

    /// Runs to the step budget, handing each update's diagnostics to `on_update`.
    pub fn run<F>(&mut self, mut on_update: F) -> Result<()>
    where
        F: FnMut(&Trainer, &Diagnostics) -> Result<()>,
    {
        while !self.is_done() {
            let (diag, _) = self.step()?;
            on_update(self, &diag)?;
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.store.clone(),
            global_step: self.state.global_step,
            meta: json!({
                "model": self.model.spec,
                "config": self.config,
                "seed": self.seed,
            }),
        }
    }
}

/// Rebuilds the model recorded in a checkpoint's metadata.
pub fn model_from_checkpoint(ckpt: &Checkpoint) -> Result<Model> {
    let spec: ModelSpec = serde_json::from_value(ckpt.meta["model"].clone())
        .map_err(|e| Error::Config(format!("checkpoint model description: {e}")))?;
    let (model, store) = Model::build(&spec);
    if !store.same_layout(&ckpt.params) {
        return Err(Error::Config("checkpoint parameters do not match the recorded model".into()));
    }
    Ok(model)
}
