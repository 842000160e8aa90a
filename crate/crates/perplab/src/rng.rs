//! Counter-based random number generation.
//!
//! Every variate is a pure function of `(master_seed, stream_index, cursor,
//! salt)`, so any path element is addressable without replay and parallel
//! execution order cannot change results. Streams with distinct indices are
//! statistically independent; equal keys reproduce draws bit-exactly.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
const SALT_GAMMA: u64 = 0xd1b5_4a32_d192_ed03;

/// SplitMix64 finalizer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Key of one independent stream: (master seed, stream index) pre-mixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    base: u64,
}

impl StreamKey {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let h = mix64(master_seed ^ GOLDEN);
        let base = mix64(h ^ stream_index.wrapping_mul(SALT_GAMMA));
        StreamKey { base }
    }

    /// Raw 64-bit word at (cursor, salt).
    #[inline]
    pub fn word(&self, cursor: u64, salt: u64) -> u64 {
        let h = mix64(self.base.wrapping_add(cursor.wrapping_mul(GOLDEN)));
        mix64(h ^ salt.wrapping_add(SALT_GAMMA).wrapping_mul(GOLDEN))
    }

    /// Uniform draw in the open interval (0, 1).
    #[inline]
    pub fn uniform(&self, cursor: u64, salt: u64) -> f64 {
        // 53 high bits, offset by half an ulp so 0 and 1 are excluded.
        ((self.word(cursor, salt) >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
    }

    /// Standard normal via Box-Muller; consumes salts `salt` and `salt + 1`.
    #[inline]
    pub fn normal(&self, cursor: u64, salt: u64) -> f64 {
        let u1 = self.uniform(cursor, salt);
        let u2 = self.uniform(cursor, salt + 1);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
