use std::sync::Arc;

use ndarray::Array2;

use super::config::PpoConfig;
use super::gae::{compute_gae, normalize};
use super::model::Model;
use crate::context::{exploration_reward, mixed_reward, Context, RewardMode, Segment};
use crate::error::{Error, Result};
use crate::game::Environment;
use crate::nn::softmax;
use crate::pool::{build_env, PoolSpec};
use crate::predator_prey::PpConfig;
use crate::rng::{stream, Purpose, Stream};

/// One environment and context per training peer tuple.
pub struct Lane {
    pub tuple_index: usize,
    pub labels: Vec<usize>,
    pub ctx: Context,
    env: Box<dyn Environment>,
    obs: Vec<f64>,
    env_rng: Stream,
    policy_rng: Stream,
    episode_return: f64,
    pending: Vec<usize>,
}

pub struct TrainState {
    pub lanes: Vec<Lane>,
    pub global_step: u64,
}

impl TrainState {
    pub fn new(model: &Model, pool: &PoolSpec, pp: &Arc<PpConfig>, n_eps: usize, seed: u64) -> Result<Self> {
        if pool.env != model.spec.env {
            return Err(Error::KindMismatch {
                expected: model.spec.env.to_string(),
                found: pool.env.to_string(),
            });
        }
        if pool.slot_cardinalities != model.spec.slot_cardinalities {
            return Err(Error::Config("pool slot cardinalities differ from the model's identifier".into()));
        }
        let labels = pool.train_labels()?;
        let lanes = pool
            .train
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (tuple, labels))| {
                let mut env = build_env(pool.env, tuple, pp)?;
                let mut env_rng = stream(seed, Purpose::Env, i as u64);
                let obs = env.reset(&mut env_rng).into_inner();
                Ok(Lane {
                    tuple_index: i,
                    labels,
                    ctx: model.new_context(n_eps),
                    env,
                    obs,
                    env_rng,
                    policy_rng: stream(seed, Purpose::Policy, i as u64),
                    episode_return: 0.0,
                    pending: Vec::new(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrainState { lanes, global_step: 0 })
    }

    /// Re-caches every context's `f` sums under new parameters.
    pub fn refresh(&mut self, model: &Model, params: &[f64]) -> Result<()> {
        for lane in &mut self.lanes {
            model.encoder.refresh(&mut lane.ctx, params)?;
        }
        Ok(())
    }
}

/// Transitions of one collection phase, stored column-wise. Each transition
/// refers to the context prefix `segments[segment][..prefix]` the policy saw.
#[derive(Clone, Debug, Default)]
pub struct RolloutBatch {
    pub obs_dim: usize,
    pub obs: Vec<f64>,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub task_rewards: Vec<f64>,
    pub exploration_rewards: Vec<f64>,
    pub episode_done: Vec<bool>,
    pub meta_done: Vec<bool>,
    pub lane: Vec<usize>,
    pub segment: Vec<usize>,
    pub prefix: Vec<usize>,
    pub segments: Vec<Segment>,
    pub lane_labels: Vec<Vec<usize>>,
    /// Critic value after each lane's last transition.
    pub bootstrap: Vec<f64>,
    pub episode_returns: Vec<f64>,
    /// Exploration coefficient at the first transition.
    pub coefficient: f64,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn obs_row(&self, i: usize) -> &[f64] {
        &self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn labels(&self, i: usize) -> &[usize] {
        &self.lane_labels[self.lane[i]]
    }

    /// Per-lane GAE over meta-episodes, then optional normalization.
    pub fn compute_advantages(&mut self, config: &PpoConfig) -> Result<()> {
        let n = self.len();
        self.advantages = vec![0.0; n];
        self.returns = vec![0.0; n];
        let mut by_lane: Vec<Vec<usize>> = vec![Vec::new(); self.lane_labels.len()];
        for i in 0..n {
            by_lane[self.lane[i]].push(i);
        }
        for (lane, idx) in by_lane.iter().enumerate() {
            if idx.is_empty() {
                continue;
            }
            let r: Vec<f64> = idx.iter().map(|&i| self.rewards[i]).collect();
            let v: Vec<f64> = idx.iter().map(|&i| self.values[i]).collect();
            let d: Vec<bool> = idx.iter().map(|&i| self.meta_done[i]).collect();
            let (adv, ret) = compute_gae(&r, &v, &d, self.bootstrap[lane], config.gamma, config.gae_lambda)?;
            for (k, &i) in idx.iter().enumerate() {
                self.advantages[i] = adv[k];
                self.returns[i] = ret[k];
            }
        }
        if config.normalize_advantages {
            normalize(&mut self.advantages);
        }
        Ok(())
    }
}

fn flush(lane: &mut Lane, batch: &mut RolloutBatch) {
    if lane.pending.is_empty() {
        return;
    }
    let id = batch.segments.len();
    batch.segments.push(Segment::from_context(&lane.ctx));
    for &i in &lane.pending {
        batch.segment[i] = id;
    }
    lane.pending.clear();
}

/// Steps every lane round-robin until `steps` transitions are stored.
pub fn collect_batch(
    state: &mut TrainState,
    model: &Model,
    params: &[f64],
    config: &PpoConfig,
    steps: usize,
) -> Result<RolloutBatch> {
    let obs_dim = model.obs_dim();
    let mut batch = RolloutBatch {
        obs_dim,
        lane_labels: state.lanes.iter().map(|l| l.labels.clone()).collect(),
        coefficient: config.reward.coefficient(state.global_step),
        ..Default::default()
    };
    let n_lanes = state.lanes.len();
    while batch.len() < steps {
        let take = n_lanes.min(steps - batch.len());
        let lanes = &mut state.lanes[..take];
        let ctxs: Vec<&Context> = lanes.iter().map(|l| &l.ctx).collect();
        let z = model.encoder.encode_many(&ctxs, params)?;
        let obs = Array2::from_shape_fn((take, obs_dim), |(r, c)| lanes[r].obs[c]);
        let out = model.evaluate(params, obs.view(), z.view())?;
        for (k, lane) in lanes.iter_mut().enumerate() {
            let lp = out.log_probs.row(k);
            let probs: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
            let action = crate::nn::sample_categorical(&probs, &mut lane.policy_rng);
            let dists: Vec<Vec<f64>> = model
                .identifier
                .split(out.id_logits.row(k).as_slice().expect("contiguous"))
                .into_iter()
                .map(softmax)
                .collect();
            let r_e = exploration_reward(&dists, &lane.labels)?;

            let i = batch.len();
            batch.obs.extend_from_slice(&lane.obs);
            batch.actions.push(action);
            batch.old_log_probs.push(lp[action]);
            batch.values.push(out.values[k]);
            batch.lane.push(lane.tuple_index);
            batch.prefix.push(lane.ctx.num_items());
            batch.segment.push(usize::MAX);
            lane.pending.push(i);

            model.encoder.append_step(&mut lane.ctx, params, &lane.obs, action)?;
            let outcome = lane.env.step(action, &mut lane.env_rng)?;
            let reward = mixed_reward(
                outcome.task_reward,
                r_e,
                state.global_step,
                &config.reward,
                RewardMode::Training,
            );
            state.global_step += 1;
            lane.episode_return += outcome.task_reward;
            batch.task_rewards.push(outcome.task_reward);
            batch.exploration_rewards.push(r_e);
            batch.rewards.push(reward);
            batch.episode_done.push(outcome.episode_done);

            let mut meta_done = false;
            if outcome.episode_done {
                let terminal = outcome.next_observation.into_inner();
                meta_done = model.encoder.close_episode(&mut lane.ctx, params, &terminal)?;
                batch.episode_returns.push(lane.episode_return);
                lane.episode_return = 0.0;
                lane.obs = lane.env.reset(&mut lane.env_rng).into_inner();
            } else {
                lane.obs = outcome.next_observation.into_inner();
            }
            batch.meta_done.push(meta_done);
            if meta_done {
                flush(lane, &mut batch);
                lane.ctx.clear();
            }
        }
    }
    for lane in state.lanes.iter_mut() {
        flush(lane, &mut batch);
    }
    let ctxs: Vec<&Context> = state.lanes.iter().map(|l| &l.ctx).collect();
    let z = model.encoder.encode_many(&ctxs, params)?;
    let obs = Array2::from_shape_fn((n_lanes, obs_dim), |(r, c)| state.lanes[r].obs[c]);
    batch.bootstrap = model.evaluate(params, obs.view(), z.view())?.values;
    Ok(batch)
}
