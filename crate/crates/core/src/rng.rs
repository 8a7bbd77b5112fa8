//! Reproducible random streams.
//!
//! Every sampler draws from ChaCha8 (`rand_chacha`) seeded with
//! `seed_from_u64(seed)`. Independent replicates use the ChaCha stream id as
//! the replicate index, and redraw attempts are separated by a 2^64-word
//! offset inside that stream, so results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Name recorded in reports so runs can be replayed.
pub const RNG_NAME: &str = "chacha8/seed_from_u64/stream=replicate/word_pos=attempt<<64";

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream for replicate `stream`, redraw attempt `attempt`.
pub fn replicate_stream(seed: u64, stream: u64, attempt: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(attempt) << 64);
    rng
}
