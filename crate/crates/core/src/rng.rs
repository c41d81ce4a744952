//! Seeded random streams.
//!
//! Every stochastic quantity in the lab is drawn from a [`RngStream`]: a
//! ChaCha8 generator keyed by a 64-bit seed and a 64-bit stream id. ChaCha is
//! counter-based, so streams with different ids are independent and a
//! stream's output never depends on how many values other streams consumed.
//! Repetition `r` of an experiment uses stream ids derived from `r` only,
//! which makes each repetition's result independent of execution order and of
//! the total number of repetitions.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream id offset for policy initialisation draws.
pub const INIT_STREAM: u64 = 0;
/// Stream id offset for training-time sampling draws.
pub const TRAIN_STREAM: u64 = 1;

/// A reproducible random stream.
#[derive(Clone, Debug)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    /// Stream 0 of `seed`.
    pub fn new(seed: u64) -> Self {
        Self::derive(seed, 0)
    }

    /// Child stream `stream` of `seed`.
    pub fn derive(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        RngStream { inner }
    }

    /// Stream used by repetition `repetition` for the given purpose
    /// ([`INIT_STREAM`] or [`TRAIN_STREAM`]).
    pub fn for_repetition(seed: u64, repetition: u64, purpose: u64) -> Self {
        Self::derive(seed, repetition.wrapping_mul(2).wrapping_add(purpose))
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
