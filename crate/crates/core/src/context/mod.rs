//! Context-aware machinery: the ego agent's cross-episode context, the
//! two-level mean encoder, the peer identifier with its auxiliary loss, the
//! exploration reward and its decaying mixing coefficient.

mod buffer;
mod encoder;
mod export;
mod identifier;
mod reward;

pub use buffer::Context;
pub use encoder::{Encoder, EncoderSpec, PrefixEncoding, Segment};
pub use export::EmbeddingWriter;
pub use identifier::{aux_loss, exploration_reward, Identifier, IdentifierSpec};
pub use reward::{mixed_reward, RewardMode, RewardSchedule};
