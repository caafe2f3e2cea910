//! Counter-based random substreams.
//!
//! Every draw in a simulation is a pure function of `(seed, trial index,
//! stream)`. A substream is a ChaCha8 keystream keyed by the seed, with the
//! stream label selecting the ChaCha stream id and the trial index selecting
//! a disjoint block window. No generator state crosses trials, so trials can
//! be evaluated in any order or on any number of threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 32-bit words reserved per trial in each stream.
const WORDS_PER_TRIAL_LOG2: u32 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stream {
    Source,
    Die,
    Station1,
    Station2,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Source => 1,
            Stream::Die => 2,
            Stream::Station1 => 3,
            Stream::Station2 => 4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Substream {
    inner: ChaCha8Rng,
}

impl Substream {
    pub fn new(seed: u64, index: u64, stream: Stream) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream.id());
        inner.set_word_pos((index as u128) << WORDS_PER_TRIAL_LOG2);
        Self { inner }
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: u32) -> u32 {
        self.inner.gen_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

impl RngCore for Substream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

/// SplitMix64 finalizer, used for stateless hashing of small keys.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Map 64 random bits to `[0, 1)`.
pub fn unit_interval(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
