//! Seeded, splittable random streams.
//!
//! Every stream is a ChaCha8 generator keyed by the master seed, with the
//! 64-bit ChaCha stream (nonce) set to the stream id. Distinct ids give
//! disjoint keystreams, and a stream can be rebuilt in isolation from
//! `(master_seed, stream_id)` alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Purposes multiplexed into the low byte of a stream id.
pub mod purpose {
    pub const SIMULATION: u64 = 0;
    pub const PRUNING: u64 = 1;
    pub const GRAPH: u64 = 2;
    pub const LANDSCAPE: u64 = 3;
    pub const FLOW: u64 = 4;
    pub const VALIDATION: u64 = 5;
    pub const OBSERVED: u64 = 6;
    pub const INIT: u64 = 7;
}

pub fn seed_split(master_seed: u64, stream_id: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id);
    rng
}

/// Stream id for replicate `replicate` and purpose `purpose`.
pub fn stream_id(replicate: u64, purpose: u64) -> u64 {
    (replicate << 8) | (purpose & 0xff)
}

/// Uniform draw in [0, 1).
#[inline]
pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}
