//! Seed derivation.
//!
//! Every random stream in a run derives from one master seed. A sub-seed is
//! keyed by a purpose string plus two integers (fold and window):
//!
//! ```text
//! h   = fnv1a64(purpose)
//! s   = splitmix64(master ^ splitmix64(h))
//! s   = splitmix64(s ^ fold)
//! out = splitmix64(s ^ window)
//! ```
//!
//! Distinct keys give independent-looking streams, and the derivation does not
//! depend on execution order, so folds may run in parallel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn derive(master: u64, purpose: &str, fold: u64, window: u64) -> u64 {
    let s = splitmix64(master ^ splitmix64(fnv1a64(purpose)));
    let s = splitmix64(s ^ fold);
    splitmix64(s ^ window)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
