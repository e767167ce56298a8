//! Deterministic random streams.
//!
//! Every random quantity is drawn from a ChaCha8 generator whose 256-bit key is
//! derived from the run seed and whose 64-bit stream id is derived from a
//! `(tag, a, b)` triple, e.g. `(ECONOMY, sample, 0)` or `(STRATEGY, sample,
//! applicant)`. Streams with different ids are independent, so results do not
//! depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags. Distinct tags never collide for the same `(a, b)`.
pub mod tag {
    pub const ECONOMY: u64 = 1;
    pub const STRATEGY: u64 = 2;
    pub const CUTOFF_SAMPLE: u64 = 3;
    pub const POLICY_CUTOFF_SAMPLE: u64 = 4;
    pub const DEVIATORS: u64 = 5;
    pub const REFERENCE: u64 = 6;
    pub const ESTIMATION_SAMPLE: u64 = 7;
}

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn key(seed: u64) -> [u8; 32] {
    let mut out = [0u8; 32];
    let mut state = seed;
    for chunk in out.chunks_mut(8) {
        state = mix(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    out
}

/// Stream id for `(tag, a, b)`.
pub fn stream_id(tag: u64, a: u64, b: u64) -> u64 {
    mix(mix(mix(tag) ^ a) ^ b.rotate_left(32))
}

/// Independent generator for the substream `(tag, a, b)` of `seed`.
pub fn substream(seed: u64, tag: u64, a: u64, b: u64) -> Rng {
    let mut rng = ChaCha8Rng::from_seed(key(seed));
    rng.set_stream(stream_id(tag, a, b));
    rng
}

/// Generator for the root stream of `seed`.
pub fn root(seed: u64) -> Rng {
    ChaCha8Rng::from_seed(key(seed))
}
