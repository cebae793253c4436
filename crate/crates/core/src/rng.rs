//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream whose 256-bit key
//! is the tuple `(seed, sample_id, index, channel)`. Two draws never share a
//! stream unless their tuples are identical, so results do not depend on the
//! order in which samples or points are visited, nor on how work is split
//! across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Identifies which consumer owns a stream for a given sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    /// Nucleus count and couplings of a generated node.
    Node,
    /// Shot noise on the trace acquired with the given sequence slot.
    ShotNoise(u8),
    /// Train/validation/test permutation.
    Split,
}

impl Channel {
    fn code(self) -> u32 {
        match self {
            Channel::Node => 1,
            Channel::ShotNoise(slot) => 0x100 | u32::from(slot),
            Channel::Split => 2,
        }
    }
}

const DOMAIN_TAG: &[u8; 4] = b"NVSC";

/// Stream for `(seed, sample_id, channel, index)`.
pub fn keyed_rng(seed: u64, sample_id: u64, channel: Channel, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&sample_id.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    key[24..28].copy_from_slice(&channel.code().to_le_bytes());
    key[28..32].copy_from_slice(DOMAIN_TAG);
    ChaCha8Rng::from_seed(key)
}

/// SplitMix64 finalizer; used to derive child seeds such as the fresh
/// shot-noise seed of a re-noised dataset.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed of `seed` for the given purpose tag.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix64(seed ^ mix64(tag))
}
