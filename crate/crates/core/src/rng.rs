//! Deterministic seed streams. Every consumer of randomness gets its own
//! ChaCha stream derived from the master seed, a purpose tag and an index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    AliceCodebook = 1,
    BobCodebook = 2,
    Transcript = 3,
    Auxiliary = 4,
}

/// Stream for `(purpose, index)` under `master`. Streams never overlap.
pub fn stream(master: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((purpose as u64) << 56) | (index & ((1 << 56) - 1)));
    rng
}
