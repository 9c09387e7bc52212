//! Keyed ChaCha streams.
//!
//! Every random quantity in the crate is addressed by a `(seed, stream, word)`
//! triple so that values do not depend on the order in which they are drawn or
//! on how trials are scheduled across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Domain tags separating the uses of one user-facing seed.
pub const PACKING_DOMAIN: u64 = 0x7061_636b;
pub const THETA_DOMAIN: u64 = 0x7468_6574;
pub const ORACLE_DOMAIN: u64 = 0x6f72_6163;
pub const TRIAL_DOMAIN: u64 = 0x7472_6961;
pub const OPTIMIZER_DOMAIN: u64 = 0x6f70_7469;

/// A generator positioned at the start of `stream` under `seed`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The `index`-th 64-bit word of `stream` under `seed`.
pub fn keyed_u64(seed: u64, stream_id: u64, index: u64) -> u64 {
    let mut rng = stream(seed, stream_id);
    rng.set_word_pos(2 * index as u128);
    rng.next_u64()
}

/// Uniform double in `[0, 1)` built from the top 53 bits of a word.
pub fn unit_f64(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Derives a child seed; used to split one run seed into per-trial seeds.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    keyed_u64(seed, tag, index)
}
