//! Deterministic parameter seeding.
//!
//! Every layer draws its initial weights from an RNG derived from the run
//! seed and the layer's own name. Networks built in different conditioning
//! modes therefore share bit-identical weights for the layers they have in
//! common, regardless of construction order.

use crate::charset::fnv1a64;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn param_rng(base_seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(base_seed.wrapping_mul(0x9e3779b97f4a7c15) ^ fnv1a64(name.as_bytes()))
}
