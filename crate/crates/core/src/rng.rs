//! Seeded stream derivation. Every random draw in a run comes from a stream
//! keyed by (master seed, cell index, purpose tag).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn tag_hash(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

pub fn stream(master_seed: u64, cell: u64, tag: &str) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(master_seed));
    rng.set_stream(splitmix64(cell ^ splitmix64(tag_hash(tag))));
    rng
}

/// Hash of a point, stable under re-evaluation at bit-identical inputs.
pub fn point_hash(seed: u64, x: &[f64]) -> u64 {
    x.iter().fold(splitmix64(seed), |h, v| splitmix64(h ^ v.to_bits()))
}

/// Map a hash to a uniform value in `[-1, 1]`.
pub fn hash_to_sym_unit(h: u64) -> f64 {
    let u = (h >> 11) as f64 / (1u64 << 53) as f64;
    2.0 * u - 1.0
}
