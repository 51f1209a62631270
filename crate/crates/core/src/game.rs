//! Stepping contract for partially observable episodic games, seen from the
//! single learning (ego) agent. Peers are advanced inside [`Environment::step`]
//! so the ego agent only ever sees its own decision points.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Kuhn,
    #[serde(alias = "pp")]
    PredatorPreyW,
}

impl EnvKind {
    pub fn obs_dim(self) -> usize {
        match self {
            EnvKind::Kuhn => crate::kuhn::OBS_DIM,
            EnvKind::PredatorPreyW => crate::predator_prey::OBS_DIM,
        }
    }

    pub fn num_actions(self) -> usize {
        match self {
            EnvKind::Kuhn => crate::kuhn::NUM_ACTIONS,
            EnvKind::PredatorPreyW => crate::predator_prey::NUM_ACTIONS,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EnvKind::Kuhn => "kuhn",
            EnvKind::PredatorPreyW => "predator_prey_w",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kuhn" => Ok(EnvKind::Kuhn),
            "pp" | "predator_prey_w" | "predator-prey-w" => Ok(EnvKind::PredatorPreyW),
            other => Err(Error::Config(format!("unknown environment `{other}`"))),
        }
    }
}

/// Ego observation: a fixed-width vector of finite reals.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation(Vec<f64>);

impl Observation {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("observation entry {i}")));
        }
        Ok(Observation(values))
    }

    /// Builds an observation from values the caller knows to be finite.
    pub(crate) fn from_finite(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Observation(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Index of a discrete ego action, checked against the action count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ActionId(usize);

impl ActionId {
    pub fn new(id: usize, num_actions: usize) -> Result<Self> {
        if id >= num_actions {
            return Err(Error::usage(format!(
                "action id {id} out of range for {num_actions} actions"
            )));
        }
        Ok(ActionId(id))
    }

    pub fn index(self) -> usize {
        self.0
    }

    /// One-hot row of width `num_actions`.
    pub fn one_hot(self, num_actions: usize) -> Vec<f64> {
        let mut v = vec![0.0; num_actions];
        v[self.0] = 1.0;
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub next_observation: Observation,
    pub task_reward: f64,
    pub episode_done: bool,
}

/// A single-ego partially observable episodic game with embedded peers.
pub trait Environment: Send {
    fn kind(&self) -> EnvKind;

    fn obs_dim(&self) -> usize {
        self.kind().obs_dim()
    }

    fn num_actions(&self) -> usize {
        self.kind().num_actions()
    }

    /// Starts a new episode and returns the first ego observation.
    fn reset(&mut self, rng: &mut Stream) -> Observation;

    /// Applies the ego action, advances every peer to the ego's next decision
    /// point (or the end of the episode) and reports the outcome.
    ///
    /// Stepping a finished episode or passing an out-of-range action id is a
    /// usage error.
    fn step(&mut self, action: usize, rng: &mut Stream) -> Result<StepOutcome>;

    fn is_done(&self) -> bool;
}

/// `t + Σ completed_lengths`: position of step `t` of the current episode in
/// the concatenated multi-episode trajectory.
pub fn cumulative_step(completed_lengths: &[usize], t: usize) -> usize {
    t + completed_lengths.iter().sum::<usize>()
}

/// Episode/step bookkeeping for one meta-episode of `n_eps` episodes.
#[derive(Clone, Debug)]
pub struct MetaEpisodeClock {
    n_eps: usize,
    step_in_episode: usize,
    completed_lengths: Vec<usize>,
}

impl MetaEpisodeClock {
    pub fn new(n_eps: usize) -> Self {
        assert!(n_eps >= 1, "a meta-episode holds at least one episode");
        MetaEpisodeClock {
            n_eps,
            step_in_episode: 1,
            completed_lengths: Vec::with_capacity(n_eps),
        }
    }

    /// 1-based index of the current episode.
    pub fn episode_index(&self) -> usize {
        self.completed_lengths.len() + 1
    }

    /// 1-based step within the current episode.
    pub fn step_in_episode(&self) -> usize {
        self.step_in_episode
    }

    pub fn completed_lengths(&self) -> &[usize] {
        &self.completed_lengths
    }

    pub fn cumulative_step(&self) -> usize {
        cumulative_step(&self.completed_lengths, self.step_in_episode)
    }

    /// Records one ego step. Returns `true` when the step closed the
    /// meta-episode, in which case the clock has been reset.
    pub fn tick(&mut self, episode_done: bool) -> bool {
        if !episode_done {
            self.step_in_episode += 1;
            return false;
        }
        self.completed_lengths.push(self.step_in_episode);
        self.step_in_episode = 1;
        if self.completed_lengths.len() == self.n_eps {
            self.completed_lengths.clear();
            return true;
        }
        false
    }
}
