//! Seed splitting. Every random draw comes from a `(seed, stream)` pair so that
//! reruns are reproducible and different consumers never share a sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids. A consumer always asks for its own stream of the master seed.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const SAMPLING: u64 = 2;
    pub const GAUSSIAN: u64 = 3;
    pub const ATOMS: u64 = 4;
    pub const DATA: u64 = 5;
    pub const MONTE_CARLO: u64 = 6;
    pub const SUBSET: u64 = 7;
    pub const SHUFFLE: u64 = 8;
}

pub type Rng = ChaCha8Rng;

/// Generator for stream `stream` of master seed `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
