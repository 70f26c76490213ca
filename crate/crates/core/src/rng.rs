//! Counter-based random streams.
//!
//! Every random draw in the laboratory is a pure function of
//! `(master seed, stream path, counter)`. A [`StreamKey`] names a node in a
//! tree of streams (`root(seed).child(trajectory).child(step)`), and
//! [`StreamKey::word`] hashes a counter under that key. Nothing is shared
//! between streams, so the result of a simulation does not depend on how
//! trajectories are scheduled across threads.

use rand::RngCore;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finaliser.
#[inline(always)]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn root(seed: u64) -> Self {
        StreamKey(mix64(seed ^ 0x5851_F42D_4C95_7F2D))
    }

    pub fn child(self, index: u64) -> Self {
        StreamKey(mix64(self.0 ^ mix64(index.wrapping_mul(GOLDEN).wrapping_add(GOLDEN))))
    }

    pub fn id(self) -> u64 {
        self.0
    }

    #[inline(always)]
    pub fn word(self, counter: u64) -> u64 {
        mix64(self.0 ^ mix64(counter.wrapping_add(1).wrapping_mul(GOLDEN)))
    }

    /// Uniform draw in `[0, 1)` with 53 random bits.
    #[inline(always)]
    pub fn uniform(self, counter: u64) -> f64 {
        (self.word(counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// A sequential generator over this stream's counters, for code that
    /// wants the `rand` distribution machinery.
    pub fn rng(self) -> StreamRng {
        StreamRng { key: self, counter: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct StreamRng {
    key: StreamKey,
    counter: u64,
}

impl StreamRng {
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        let u = self.key.uniform(self.counter);
        self.counter += 1;
        u
    }
}

impl RngCore for StreamRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        let w = self.key.word(self.counter);
        self.counter += 1;
        w
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Index of the categorical outcome for uniform `u` given cumulative weights.
///
/// `cumulative` must be nondecreasing; zero-weight categories are never chosen.
#[inline]
pub fn sample_cumulative(cumulative: &[f64], u: f64) -> usize {
    let total = *cumulative.last().expect("empty distribution");
    let target = u * total;
    let idx = cumulative.partition_point(|&c| c <= target);
    if idx < cumulative.len() {
        idx
    } else {
        // u * total rounded onto the last breakpoint; take the last positive weight
        let mut i = cumulative.len() - 1;
        while i > 0 && cumulative[i] == cumulative[i - 1] {
            i -= 1;
        }
        i
    }
}

pub fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}
