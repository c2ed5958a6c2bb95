//! Deterministic seed derivation.
//!
//! Every randomized component (network init, agent exploration, scenario
//! sampling, per-episode sensor noise, evaluation trials) owns an RNG seeded
//! from the run seed plus a stream id and an index. Deriving seeds from
//! indices rather than from a shared sequential stream keeps evaluation
//! trials order-independent, so they can run in parallel and still reproduce
//! bit-identical results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream id for Q-network weight initialization.
pub const STREAM_NET_INIT: u64 = 1;
/// Stream id for the agent's exploration RNG.
pub const STREAM_AGENT: u64 = 2;
/// Stream id for training scenario sampling.
pub const STREAM_SCENARIO: u64 = 3;
/// Stream id for per-episode environment noise during training.
pub const STREAM_EPISODE: u64 = 4;
/// Stream id for evaluation trials (combined with a per-harness index).
pub const STREAM_EVAL: u64 = 5;
/// Stream id for the trainer's snapshot-selection validation episodes,
/// separate from both training and evaluation streams.
pub const STREAM_VALIDATION: u64 = 6;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Mix a base seed with a stream id and an index into a fresh 64-bit seed.
pub fn mix(base: u64, stream: u64, index: u64) -> u64 {
    let mut s = splitmix64(base);
    s = splitmix64(s ^ stream.wrapping_mul(0xd6e8feb86659fd93));
    splitmix64(s ^ index.wrapping_mul(0xa5a5a5a5a5a5a5a5))
}

/// RNG for `(base, stream, index)`.
pub fn rng(base: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(base, stream, index))
}
