//! Named random streams.
//!
//! Every run owns a master seed. Components draw from separate streams so
//! that, for example, the environment noise realized in round `t` does not
//! depend on how many random numbers the algorithm consumed. Streams:
//!
//! - [`Stream::EnvNoise`]: payoff noise, addressed counter-style by round;
//! - [`Stream::Algorithm`]: sampling done by policies (EXP3 draws, random
//!   tree descents, ...), consumed sequentially;
//! - [`Stream::InstanceGen`]: instance generators (needle assignments,
//!   payoff walks, random trees).

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Identifies an independent random stream under one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    EnvNoise = 1,
    Algorithm = 2,
    InstanceGen = 3,
}

/// Sequential generator for the given `(seed, stream)` pair.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Counter-addressed uniform in `[0, 1)`.
///
/// Stateless: the value depends only on `(seed, stream, counter)`, so
/// replicates and parallel workers never share generator state. Uses the
/// SplitMix64 finalizer over the mixed key.
pub fn unit_uniform(seed: u64, stream: Stream, counter: u64) -> f64 {
    let mut z = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add((stream as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9))
        .wrapping_add(counter.wrapping_mul(0x94d0_49bb_1331_11eb));
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    // 53 random bits -> [0, 1)
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Two independent counter-addressed uniforms (for Box-Muller style draws).
pub fn unit_uniform_pair(seed: u64, stream: Stream, counter: u64) -> (f64, f64) {
    (
        unit_uniform(seed, stream, counter.wrapping_mul(2)),
        unit_uniform(seed, stream, counter.wrapping_mul(2).wrapping_add(1)),
    )
}
