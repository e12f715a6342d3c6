//! Counter-based RNG streams.
//!
//! Every random quantity in a run is drawn from a stream keyed on
//! `(master seed, purpose tag, index)`, so parallel work is reproducible
//! regardless of how it is scheduled.

use rand::SeedableRng;
pub use rand_xoshiro::Xoshiro256PlusPlus as StreamRng;

pub mod tag {
    pub const PHASE1: u64 = 1;
    pub const CORRECTION: u64 = 2;
    pub const REPLICATE: u64 = 3;
    pub const PILOT: u64 = 4;
    pub const DATA: u64 = 5;
    pub const INIT: u64 = 6;
    pub const OPTIM: u64 = 7;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a key.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93)) ^ index)
}

pub fn stream(seed: u64, tag: u64, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, tag, index))
}
