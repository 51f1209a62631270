//! Minimal dense network core: flat parameter storage, MLPs with an
//! explicit activation tape, softmax utilities, Adam and gradient checking.
//!
//! All parameters of a model live in one contiguous `Vec<f64>`; layers hold
//! [`Slot`]s into it. Gradients use the same layout, which keeps clipping,
//! Adam and finite-difference checks trivial.

mod adam;
mod checkpoint;
mod gradcheck;
mod init;
mod loss;
mod mlp;
mod params;

pub use adam::{adam_step, clip_global_norm, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{finite_difference_check, GradCheck};
pub use init::orthogonal;
pub use loss::{categorical_entropy, log_softmax, sample_categorical, softmax, softmax_ce};
pub use mlp::{Mlp, MlpSpec, Tape};
pub use params::{ParamStore, Slot, Tensor};
