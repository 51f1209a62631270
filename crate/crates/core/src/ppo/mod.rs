//! PPO with GAE over concatenated multi-episode trajectories, trained jointly
//! with the peer-identification loss.

mod config;
mod gae;
mod model;
mod rollout;
mod trainer;
mod update;

pub use config::{PpoConfig, Preset};
pub use gae::{compute_gae, normalize};
pub use model::{Model, ModelSpec, PolicyOutput};
pub use rollout::{collect_batch, Lane, RolloutBatch, TrainState};
pub use trainer::{model_from_checkpoint, Diagnostics, DiagnosticsWriter, Trainer, DIAGNOSTICS_HEADER};
pub use update::{build_units, minibatch_loss, ppo_update, LossParts, Unit, UpdateMode, UpdateStats};
