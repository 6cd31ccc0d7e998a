//! Keyed random substreams.
//!
//! Every random draw in a generation or experiment run comes from a ChaCha8
//! stream seeded by mixing the run seed with a small tuple of integers
//! (domain tag, class, observation index, trial, ...). Results therefore do
//! not depend on iteration order or on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Domain tags keep substreams of unrelated purposes apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Model = 1,
    Identity = 2,
    Render = 3,
    Split = 4,
    Noise = 5,
    Solver = 6,
    Test = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `seed`, a domain tag and `keys` into one 64-bit stream seed.
pub fn mix(seed: u64, domain: Domain, keys: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ splitmix64(domain as u64));
    for &k in keys {
        h = splitmix64(h ^ splitmix64(k.wrapping_add(0xA076_1D64_78BD_642F)));
    }
    h
}

pub fn substream(seed: u64, domain: Domain, keys: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, domain, keys))
}
