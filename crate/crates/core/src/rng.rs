//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit stream. Streams are ChaCha8
//! keystreams keyed by a seed and a 64-bit stream id, so replicas and lanes
//! never share state and any run can be replayed from `(seed, replica)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Lanes used by a single replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lane {
    Main = 0,
    First = 1,
    Second = 2,
    Aux = 3,
}

const LANES: u64 = 4;

/// Stream for `(seed, replica, lane)`.
pub fn stream(seed: u64, replica: u64, lane: Lane) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica.wrapping_mul(LANES).wrapping_add(lane as u64));
    rng
}

/// Main-lane stream for a replica.
pub fn replica_stream(seed: u64, replica: u64) -> Stream {
    stream(seed, replica, Lane::Main)
}
