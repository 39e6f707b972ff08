//! Seeded, splittable random streams.
//!
//! Every random draw in the crate comes from a [`RngStream`], which is a pair
//! `(master_seed, stream_index)`. The generator is ChaCha8 keyed by the master
//! seed and positioned on the ChaCha stream `stream_index`, so two streams with
//! the same pair produce identical sequences no matter which thread runs them.
//!
//! Stream indices for training runs follow one rule:
//!
//! ```text
//! stream_index = hash64(master_seed, trajectory_id, step, evaluation_id)
//! ```
//!
//! where `hash64` folds each word into a SplitMix64 state (see [`hash64`]).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finaliser.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive hash of a word sequence: `h ← mix64(h + γ + w)` per word,
/// starting from `h = 0`.
pub fn hash64(words: &[u64]) -> u64 {
    words.iter().fold(0u64, |h, &w| {
        mix64(h.wrapping_add(GOLDEN_GAMMA).wrapping_add(w))
    })
}

/// Step index reserved for drawing initial parameters / network weights.
pub const INIT_STEP: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub index: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, index: u64) -> Self {
        Self { master_seed, index }
    }

    /// Stream for one evaluation inside a training run.
    pub fn derive(master_seed: u64, trajectory: u64, step: u64, evaluation: u64) -> Self {
        Self::new(master_seed, hash64(&[master_seed, trajectory, step, evaluation]))
    }

    /// Independent sub-stream, e.g. one per Hamiltonian term of a single evaluation.
    pub fn child(&self, k: u64) -> Self {
        Self::new(self.master_seed, hash64(&[self.index, k]))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut s = self.master_seed;
        for chunk in key.chunks_exact_mut(8) {
            s = s.wrapping_add(GOLDEN_GAMMA);
            chunk.copy_from_slice(&mix64(s).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.index);
        rng
    }
}

/// Streams for the evaluations of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepStreams {
    pub master_seed: u64,
    pub trajectory: u64,
    pub step: u64,
}

impl StepStreams {
    pub fn new(master_seed: u64, trajectory: u64, step: u64) -> Self {
        Self { master_seed, trajectory, step }
    }

    pub fn stream(&self, evaluation: u64) -> RngStream {
        RngStream::derive(self.master_seed, self.trajectory, self.step, evaluation)
    }
}
