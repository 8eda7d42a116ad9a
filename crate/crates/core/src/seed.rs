//! Counter-based seed mixing.
//!
//! Every random quantity in the crate is a pure function of a 64-bit seed and
//! an integer key, so any site of the environment or any trial can be
//! regenerated independently of the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// The splitmix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Zig-zag encoding of a signed site: 0, -1, 1, -2, 2, ... map to 0, 1, 2, 3, 4, ...
#[inline]
pub fn zigzag(site: i64) -> u64 {
    ((site << 1) ^ (site >> 63)) as u64
}

/// Uniform in [0, 1) from the top 53 bits of a mixed word.
#[inline]
pub fn unit_from_bits(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Derives an independent child seed from `(seed, key)`.
#[inline]
pub fn derive(seed: u64, key: u64) -> u64 {
    mix64(seed ^ mix64(key.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Stream tags used when deriving per-purpose seeds from one experiment seed.
pub mod stream {
    pub const ENVIRONMENT: u64 = 0x656e_7669;
    pub const LYAPUNOV: u64 = 0x6c79_6170;
    pub const TRIALS: u64 = 0x7472_6961;
    pub const FROZEN: u64 = 0x6672_6f7a;
    pub const SUPERMARTINGALE: u64 = 0x7375_7065;
}

/// Generator for one independent unit of work (a replica, a trial).
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, index))
}
