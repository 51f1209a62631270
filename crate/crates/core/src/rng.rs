//! Seeded, splittable random streams.
//!
//! Every consumer of randomness owns a ChaCha stream derived from a master
//! seed and a small tuple of integers (environment index, purpose, ...).
//! ChaCha is counter based, so streams are independent of the order in
//! which they are created or advanced.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Stream tags keep the different consumers of one environment slot apart.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Env = 1,
    Policy = 2,
    Init = 3,
    Shuffle = 4,
    Pool = 5,
    PoolTest = 6,
    Eval = 7,
}

/// splitmix64 finalizer, used to spread structured keys over the seed space.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream for `(master_seed, purpose, index)`.
pub fn stream(master_seed: u64, purpose: Purpose, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(master_seed ^ mix(purpose as u64)));
    rng.set_stream(mix(index.wrapping_add(purpose as u64)));
    rng
}
