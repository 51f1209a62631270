//! Fast peer adaptation laboratory.
//!
//! An ego agent with a context encoder learns to identify and adapt to
//! rule-based peers over multi-episode interactions. Two environments are
//! provided: exact Kuhn Poker (ego plays P1) and a partially observable
//! predator-prey world with watchtowers.
//!
//! The crate is organised bottom-up:
//!
//! - [`game`]: stepping contract shared by both environments.
//! - [`kuhn`], [`predator_prey`]: the environments and their rule-based peers.
//! - [`pool`]: peer-pool generation and serialization.
//! - [`nn`]: dense MLPs with explicit backward passes, Adam, checkpoints.
//! - [`context`]: context buffer, two-level mean encoder, peer identifier,
//!   exploration reward.
//! - [`ppo`]: rollout collection, multi-episode GAE, PPO update, warm-up.
//! - [`adapt`]: online adaptation, change detection and metrics.

pub mod adapt;
pub mod context;
pub mod error;
pub mod game;
pub mod kuhn;
pub mod nn;
pub mod pool;
pub mod ppo;
pub mod predator_prey;
pub mod rng;

pub use error::{Error, Result};
pub use game::{ActionId, EnvKind, Environment, Observation, StepOutcome};
