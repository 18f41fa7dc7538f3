//! Counter-keyed random streams.
//!
//! Every random draw in a run is taken from a ChaCha8 stream addressed by
//! `(seed, experiment, block, shot, stream)`, so a shot's randomness does not
//! depend on which thread evaluates it or in which order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Which experiment family a stream belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Decay = 0,
    Fringe = 1,
    Lifetime = 2,
    Auxiliary = 3,
}

/// Independent purpose-specific streams within one shot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Phases = 0,
    Laser = 1,
    Physics = 2,
    Detector = 3,
}

#[derive(Debug, Clone)]
pub struct ShotRngFactory {
    base: ChaCha8Rng,
    experiment: Experiment,
}

impl ShotRngFactory {
    pub fn new(seed: u64, experiment: Experiment) -> Self {
        ShotRngFactory {
            base: ChaCha8Rng::seed_from_u64(seed),
            experiment,
        }
    }

    /// Stream for `(block, shot, stream)`; `block` is the delay or phase index.
    pub fn rng(&self, block: u32, shot: u32, stream: Stream) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(((block as u64) << 32) | shot as u64);
        // 68-bit word counter: 16 slots of 2^64 words each
        let slot = (self.experiment as u128) * 4 + stream as u128;
        rng.set_word_pos(slot << 64);
        rng
    }
}

/// Independent child seed for the `index`-th sub-run of a seeded run.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.set_word_pos(16u128 << 64);
    rng.next_u64()
}
