//! Per-voxel random streams that do not depend on traversal order.
//!
//! A stream key is the SplitMix64 finalizer folded over
//! `(seed, scale index, replicate, voxel)`; the key seeds a ChaCha8
//! generator and the substream picks the ChaCha stream id.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Substream {
    Dw = 0,
    B0 = 1,
    Noise = 2,
    Coefficients = 3,
}

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn mix(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |h, &p| splitmix64(h ^ splitmix64(p)))
}

pub fn voxel_stream(seed: u64, scale_index: u64, replicate: u64, voxel: u64, sub: Substream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, &[scale_index, replicate, voxel]));
    rng.set_stream(sub as u64);
    rng
}
