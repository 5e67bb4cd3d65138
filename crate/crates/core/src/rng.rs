//! Reproducible per-path random streams.
//!
//! Path `k` of a batch draws from its own ChaCha8 stream: the 256-bit key
//! is expanded from `(master_seed, phase)` and the 64-bit stream id is `k`.
//! A path's randomness therefore never depends on which worker ran it or
//! on how the batch was split, so batches are bit-identical across thread
//! counts.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Independent uses of the same path index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    /// Increment signs of the sampled path.
    Path,
    /// Filler and residual signs of the augmentation transform.
    Augment,
}

impl Phase {
    fn tag(self) -> u64 {
        match self {
            Phase::Path => 0x5041_5448,
            Phase::Augment => 0x4155_474d,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngPolicy {
    pub master_seed: u64,
}

/// SplitMix64 output function.
pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngPolicy {
    pub fn new(master_seed: u64) -> Self {
        RngPolicy { master_seed }
    }

    /// A child policy for an independent sub-experiment, e.g. one grid point
    /// or the second pass of a two-pass estimate.
    pub fn derive(&self, tag: u64) -> RngPolicy {
        RngPolicy {
            master_seed: splitmix64(self.master_seed ^ splitmix64(tag)),
        }
    }

    fn key(&self, phase: Phase) -> [u8; 32] {
        let mut state = self.master_seed ^ splitmix64(phase.tag());
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        key
    }

    /// The stream owned by `path` in `phase`.
    pub fn stream(&self, path: u64, phase: Phase) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key(phase));
        rng.set_stream(path);
        rng
    }

    /// Streams for many paths sharing one key.
    pub fn streams(&self, phase: Phase) -> StreamFactory {
        StreamFactory {
            key: self.key(phase),
        }
    }
}

/// Cached key for repeated stream construction on the hot path.
#[derive(Clone, Copy, Debug)]
pub struct StreamFactory {
    key: [u8; 32],
}

impl StreamFactory {
    #[inline]
    pub fn stream(&self, path: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(path);
        rng
    }
}

/// Fair signs, one bit each, consumed least-significant bit first.
pub struct SignSource<R> {
    rng: R,
    word: u64,
    left: u32,
}

impl<R: RngCore> SignSource<R> {
    pub fn new(rng: R) -> Self {
        SignSource {
            rng,
            word: 0,
            left: 0,
        }
    }

    /// `true` with probability 1/2.
    #[inline]
    pub fn next_bit(&mut self) -> bool {
        if self.left == 0 {
            self.word = self.rng.next_u64();
            self.left = 64;
        }
        let bit = self.word & 1 == 1;
        self.word >>= 1;
        self.left -= 1;
        bit
    }

    /// `±1.0`.
    #[inline]
    pub fn next_sign(&mut self) -> f64 {
        if self.next_bit() {
            1.0
        } else {
            -1.0
        }
    }

    /// Sum of the next `count` fair ±1 signs, bit-for-bit the same stream
    /// consumption as `count` calls to [`Self::next_sign`].
    pub fn sum_signs(&mut self, mut count: usize) -> i64 {
        let mut total = 0i64;
        while count > 0 {
            if self.left == 0 {
                self.word = self.rng.next_u64();
                self.left = 64;
            }
            let take = count.min(self.left as usize) as u32;
            let mask = if take == 64 { u64::MAX } else { (1u64 << take) - 1 };
            let ones = (self.word & mask).count_ones() as i64;
            total += 2 * ones - take as i64;
            self.word = if take == 64 { 0 } else { self.word >> take };
            self.left -= take;
            count -= take as usize;
        }
        total
    }
}
