//! Predator-Prey-W: a particle world with two predators (one is the ego), two
//! path-following prey, four watchtowers and two inert landmarks.
//!
//! The ego sees only entities within `obs_radius`, except while touching a
//! watchtower, when everything is visible. Predators share the reward
//! `-c * Σ_prey min_predator dist`.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{EnvKind, Environment, Observation, StepOutcome};
use crate::rng::Stream;

pub const OBS_DIM: usize = 37;
pub const NUM_ACTIONS: usize = 5;
pub const NUM_PREY: usize = 2;
pub const NUM_LANDMARK_SLOTS: usize = 6;

/// Discrete moves, in tie-break order.
pub const STAY: usize = 0;
pub const LEFT: usize = 1;
pub const RIGHT: usize = 2;
pub const DOWN: usize = 3;
pub const UP: usize = 4;

const MOVES: [[f64; 2]; NUM_ACTIONS] = [[0.0, 0.0], [-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]];

const DEFAULT_CONFIG: &str = include_str!("../data/pp_default.toml");

pub type Vec2 = [f64; 2];

fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}

pub fn dist(a: Vec2, b: Vec2) -> f64 {
    norm(sub(a, b))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathPattern {
    pub id: u32,
    pub waypoints: Vec<Vec2>,
}

/// World constants, path patterns and the train/test path split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpConfig {
    pub dt: f64,
    pub damping: f64,
    pub accel: f64,
    pub max_speed: f64,
    pub agent_radius: f64,
    pub tower_contact_radius: f64,
    pub obs_radius: f64,
    pub reward_coef: f64,
    pub max_steps: usize,
    /// Prey distance per step as a fraction of the predators' per-step maximum.
    pub prey_speed_factor: f64,
    pub towers: [Vec2; 4],
    pub num_inert_landmarks: usize,
    pub inert_landmark_extent: f64,
    pub spawn_extent: f64,
    pub train_paths: Vec<u32>,
    pub test_paths: Vec<u32>,
    pub paths: Vec<PathPattern>,
}

impl Default for PpConfig {
    fn default() -> Self {
        toml::from_str(DEFAULT_CONFIG).expect("bundled predator-prey config parses")
    }
}

impl PpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_inert_landmarks + self.towers.len() != NUM_LANDMARK_SLOTS {
            return Err(Error::Config(format!(
                "observation layout needs exactly {NUM_LANDMARK_SLOTS} landmark slots"
            )));
        }
        if self.max_steps == 0 || self.dt <= 0.0 || self.max_speed <= 0.0 {
            return Err(Error::Config("non-positive physics constant".into()));
        }
        for id in self.train_paths.iter().chain(&self.test_paths) {
            let p = self.path(*id)?;
            if p.waypoints.len() < 2 {
                return Err(Error::Config(format!("path {id} needs at least 2 waypoints")));
            }
        }
        if self.train_paths.iter().any(|p| self.test_paths.contains(p)) {
            return Err(Error::Config("train and test path sets overlap".into()));
        }
        Ok(())
    }

    pub fn path(&self, id: u32) -> Result<&PathPattern> {
        self.paths
            .iter()
            .find(|p| p.id == id)
            .ok_or_else(|| Error::Config(format!("unknown path id {id}")))
    }

    /// Default prey distance per step.
    pub fn prey_speed(&self) -> f64 {
        self.prey_speed_factor * self.max_speed * self.dt
    }

    pub fn touch_distance(&self) -> f64 {
        2.0 * self.agent_radius
    }
}

/// Moves back and forth along a polyline at constant distance per step.
#[derive(Clone, Debug, PartialEq)]
pub struct PreyPathPolicy {
    waypoints: Vec<Vec2>,
    /// Arc length at the end of each segment.
    cumulative: Vec<f64>,
    speed: f64,
    arc: f64,
    direction: f64,
}

impl PreyPathPolicy {
    pub fn new(waypoints: Vec<Vec2>, speed: f64) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::usage("a prey path needs at least 2 waypoints"));
        }
        if !(speed > 0.0) {
            return Err(Error::usage("prey speed must be positive"));
        }
        let mut cumulative = Vec::with_capacity(waypoints.len() - 1);
        let mut total = 0.0;
        for w in waypoints.windows(2) {
            total += dist(w[0], w[1]);
            cumulative.push(total);
        }
        Ok(PreyPathPolicy {
            waypoints,
            cumulative,
            speed,
            arc: 0.0,
            direction: 1.0,
        })
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().expect("at least one segment")
    }

    pub fn direction(&self) -> f64 {
        self.direction
    }

    pub fn arc(&self) -> f64 {
        self.arc
    }

    pub fn set_arc(&mut self, arc: f64, direction: f64) {
        self.arc = arc.clamp(0.0, self.length());
        self.direction = if direction < 0.0 { -1.0 } else { 1.0 };
    }

    /// Point on the polyline at arc length `s`.
    pub fn point_at(&self, s: f64) -> Vec2 {
        let s = s.clamp(0.0, self.length());
        let mut start = 0.0;
        for (i, &end) in self.cumulative.iter().enumerate() {
            if s <= end || i + 1 == self.cumulative.len() {
                let (a, b) = (self.waypoints[i], self.waypoints[i + 1]);
                let seg = end - start;
                let f = if seg > 0.0 { (s - start) / seg } else { 0.0 };
                return [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])];
            }
            start = end;
        }
        unreachable!()
    }

    pub fn position(&self) -> Vec2 {
        self.point_at(self.arc)
    }

    /// Advances one step and returns the displacement; the direction flips
    /// at either end of the path.
    pub fn advance(&mut self) -> Vec2 {
        let before = self.position();
        let total = self.length();
        let mut s = self.arc + self.direction * self.speed;
        if s >= total {
            s = (2.0 * total - s).max(0.0);
            self.direction = -1.0;
        } else if s <= 0.0 {
            s = (-s).min(total);
            self.direction = 1.0;
        }
        self.arc = s;
        sub(self.position(), before)
    }
}

/// Velocity command for a path-following prey: the displacement of one
/// advance divided by `dt`.
pub fn prey_step(policy: &mut PreyPathPolicy, dt: f64) -> Vec2 {
    let d = policy.advance();
    [d[0] / dt, d[1] / dt]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredatorPrefPolicy {
    pub target_prey: usize,
}

impl PredatorPrefPolicy {
    pub fn new(target_prey: usize) -> Result<Self> {
        if target_prey >= NUM_PREY {
            return Err(Error::usage(format!("prey index {target_prey} out of range")));
        }
        Ok(PredatorPrefPolicy { target_prey })
    }
}

/// The move among the five that best closes the distance to `target`;
/// first in move order on ties, so a target at the current position gives
/// `STAY`.
pub fn chase_action(from: Vec2, target: Vec2) -> usize {
    let d = sub(target, from);
    let mut best = (STAY, 0.0);
    for (a, m) in MOVES.iter().enumerate().skip(1) {
        let score = m[0] * d[0] + m[1] * d[1];
        if score > best.1 {
            best = (a, score);
        }
    }
    best.0
}

pub fn peer_predator_step(policy: &PredatorPrefPolicy, world: &World) -> usize {
    chase_action(world.agents[1].pos, world.agents[2 + policy.target_prey].pos)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Body {
    pub pos: Vec2,
    pub vel: Vec2,
}

/// Entity order: ego predator, peer predator, prey 0, prey 1. Landmark
/// slots: the four towers, then the inert landmarks.
#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub agents: [Body; 4],
    pub landmarks: [Vec2; NUM_LANDMARK_SLOTS],
    pub touched: [bool; NUM_PREY],
    pub step_count: usize,
}

impl World {
    pub fn predators(&self) -> [Vec2; 2] {
        [self.agents[0].pos, self.agents[1].pos]
    }

    pub fn prey(&self) -> [Vec2; NUM_PREY] {
        [self.agents[2].pos, self.agents[3].pos]
    }
}

/// `-c Σ_prey min_predator dist`.
pub fn cover_reward(world: &World, coef: f64) -> f64 {
    let preds = world.predators();
    -coef
        * world
            .prey()
            .iter()
            .map(|&b| preds.iter().map(|&a| dist(a, b)).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
}

pub fn in_tower_contact(world: &World, config: &PpConfig) -> bool {
    let ego = world.agents[0].pos;
    config
        .towers
        .iter()
        .any(|&t| dist(ego, t) <= config.tower_contact_radius)
}

/// The 37-wide ego observation: own absolute position and velocity, then
/// `[rel pos, vel, flag]` per other agent and `[rel pos, flag]` per
/// landmark slot. Hidden entities are all zero.
pub fn build_ego_obs(world: &World, config: &PpConfig) -> Observation {
    let ego = world.agents[0];
    let all_visible = in_tower_contact(world, config);
    let visible = |p: Vec2| all_visible || dist(ego.pos, p) <= config.obs_radius;
    let mut v = Vec::with_capacity(OBS_DIM);
    v.extend_from_slice(&ego.pos);
    v.extend_from_slice(&ego.vel);
    for other in &world.agents[1..] {
        if visible(other.pos) {
            v.extend_from_slice(&sub(other.pos, ego.pos));
            v.extend_from_slice(&other.vel);
            v.push(1.0);
        } else {
            v.extend_from_slice(&[0.0; 5]);
        }
    }
    for &l in &world.landmarks {
        if visible(l) {
            v.extend_from_slice(&sub(l, ego.pos));
            v.push(1.0);
        } else {
            v.extend_from_slice(&[0.0; 3]);
        }
    }
    debug_assert_eq!(v.len(), OBS_DIM);
    Observation::from_finite(v)
}

/// Rule-based peers for one episode: the other predator and both prey.
#[derive(Clone, Debug, PartialEq)]
pub struct PpPeers {
    pub predator: PredatorPrefPolicy,
    pub prey: [PreyPathPolicy; NUM_PREY],
}

fn integrate(body: &mut Body, action: usize, config: &PpConfig) {
    let m = MOVES[action];
    for k in 0..2 {
        body.vel[k] = body.vel[k] * (1.0 - config.damping) + m[k] * config.accel * config.dt;
    }
    let speed = norm(body.vel);
    if speed > config.max_speed {
        let s = config.max_speed / speed;
        body.vel = [body.vel[0] * s, body.vel[1] * s];
    }
    for k in 0..2 {
        body.pos[k] += body.vel[k] * config.dt;
        if body.pos[k].abs() > 1.0 {
            body.pos[k] = body.pos[k].clamp(-1.0, 1.0);
            body.vel[k] = 0.0;
        }
    }
}

/// Advances every agent one step. Returns the ego's outcome.
pub fn step_world(
    world: &mut World,
    ego_action: usize,
    peers: &mut PpPeers,
    config: &PpConfig,
) -> Result<StepOutcome> {
    if ego_action >= NUM_ACTIONS {
        return Err(Error::usage(format!("action id {ego_action} out of range")));
    }
    if is_terminal(world, config) {
        return Err(Error::usage("stepping a finished episode"));
    }
    let peer_action = peer_predator_step(&peers.predator, world);
    integrate(&mut world.agents[0], ego_action, config);
    integrate(&mut world.agents[1], peer_action, config);
    for (i, prey) in peers.prey.iter_mut().enumerate() {
        let vel = prey_step(prey, config.dt);
        world.agents[2 + i] = Body {
            pos: prey.position(),
            vel,
        };
    }
    world.step_count += 1;
    let touch = config.touch_distance();
    let preds = world.predators();
    for (i, b) in world.prey().iter().enumerate() {
        if preds.iter().any(|&a| dist(a, *b) <= touch) {
            world.touched[i] = true;
        }
    }
    Ok(StepOutcome {
        next_observation: build_ego_obs(world, config),
        task_reward: cover_reward(world, config.reward_coef),
        episode_done: is_terminal(world, config),
    })
}

fn is_terminal(world: &World, config: &PpConfig) -> bool {
    world.touched.iter().all(|&t| t) || world.step_count >= config.max_steps
}

pub struct PpEnv {
    config: Arc<PpConfig>,
    peers: PpPeers,
    world: Option<World>,
}

impl PpEnv {
    pub fn new(config: Arc<PpConfig>, peers: PpPeers) -> Self {
        PpEnv {
            config,
            peers,
            world: None,
        }
    }

    pub fn world(&self) -> Option<&World> {
        self.world.as_ref()
    }

    pub fn peers(&self) -> &PpPeers {
        &self.peers
    }

    pub fn set_peers(&mut self, peers: PpPeers) {
        self.peers = peers;
    }

    pub fn config(&self) -> &PpConfig {
        &self.config
    }
}

impl Environment for PpEnv {
    fn kind(&self) -> EnvKind {
        EnvKind::PredatorPreyW
    }

    fn reset(&mut self, rng: &mut Stream) -> Observation {
        let c = &*self.config;
        let mut uniform = |extent: f64| -> Vec2 {
            [rng.gen_range(-extent..=extent), rng.gen_range(-extent..=extent)]
        };
        let ego = uniform(c.spawn_extent);
        let peer = uniform(c.spawn_extent);
        let mut landmarks = [[0.0; 2]; NUM_LANDMARK_SLOTS];
        landmarks[..4].copy_from_slice(&c.towers);
        for l in landmarks.iter_mut().skip(4) {
            *l = uniform(c.inert_landmark_extent);
        }
        let mut agents = [Body::default(); 4];
        agents[0].pos = ego;
        agents[1].pos = peer;
        for (i, prey) in self.peers.prey.iter_mut().enumerate() {
            let arc = rng.gen_range(0.0..=prey.length());
            let dir = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            prey.set_arc(arc, dir);
            agents[2 + i].pos = prey.position();
        }
        let world = World {
            agents,
            landmarks,
            touched: [false; NUM_PREY],
            step_count: 0,
        };
        let obs = build_ego_obs(&world, c);
        self.world = Some(world);
        obs
    }

    fn step(&mut self, action: usize, _rng: &mut Stream) -> Result<StepOutcome> {
        let world = self
            .world
            .as_mut()
            .ok_or_else(|| Error::usage("step before reset"))?;
        step_world(world, action, &mut self.peers, &self.config)
    }

    fn is_done(&self) -> bool {
        self.world
            .as_ref()
            .is_none_or(|w| is_terminal(w, &self.config))
    }
}
