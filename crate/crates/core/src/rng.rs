//! Seed derivation. Every random stream in the crate is a ChaCha stream keyed
//! by a root seed and addressed by a (purpose, index) counter, so results never
//! depend on scheduling or on how many workers ran.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream purposes. Values are part of the reproducibility contract.
pub mod purpose {
    pub const LDA: u64 = 1;
    pub const BOOTSTRAP: u64 = 2;
    pub const WORLD: u64 = 3;
    pub const CASCADE: u64 = 4;
    pub const WORDS: u64 = 5;
    pub const FOLD_IN: u64 = 6;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream `index` for `purpose` under `root`.
pub fn stream(root: u64, purpose: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(root ^ splitmix64(purpose)));
    rng.set_stream(index);
    rng
}
