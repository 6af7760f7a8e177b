//! Independent random streams derived from one run seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Network initialization, minibatch sampling and exploration noise.
pub const AGENT_STREAM: u64 = 0;
/// Random initial conditions.
pub const INITIAL_STATE_STREAM: u64 = 1;
/// Per-episode disturbance draws.
pub const DISTURBANCE_STREAM: u64 = 2;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
