//! Counter-based random numbers.
//!
//! A [`StreamKey`] is a 64-bit key derived from a seed and any number of
//! integer coordinates (performance index, judge index, ...). Each draw is a
//! pure function of `(key, counter)`, so values do not depend on the order in
//! which they are requested or on how the work is split across threads.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        StreamKey(mix64(seed.wrapping_add(GOLDEN)))
    }

    /// Child key for one more coordinate.
    #[must_use]
    pub fn derive(self, coordinate: u64) -> Self {
        StreamKey(mix64(self.0 ^ mix64(coordinate.wrapping_mul(GOLDEN).wrapping_add(0x632B_E59B_D9B4_E019))))
    }

    /// Child key for a string coordinate (FNV-1a folded through the mixer).
    #[must_use]
    pub fn derive_str(self, label: &str) -> Self {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        self.derive(h)
    }

    pub fn bits(self, counter: u64) -> u64 {
        mix64(self.0.wrapping_add(mix64(counter.wrapping_add(1).wrapping_mul(GOLDEN))))
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(self, counter: u64) -> f64 {
        ((self.bits(counter) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..bound`.
    pub fn index(self, counter: u64, bound: usize) -> usize {
        assert!(bound > 0, "bound must be non-zero");
        ((self.uniform(counter) * bound as f64) as usize).min(bound - 1)
    }

    /// Standard normal via Box-Muller on counters `2k` and `2k + 1`.
    pub fn normal(self, counter: u64) -> f64 {
        let u1 = self.uniform(counter.wrapping_mul(2));
        let u2 = self.uniform(counter.wrapping_mul(2).wrapping_add(1));
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Deterministic Fisher-Yates permutation of `0..n`.
    pub fn permutation(self, n: usize) -> Vec<usize> {
        let mut out: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.index(i as u64, i + 1);
            out.swap(i, j);
        }
        out
    }
}
