//! Portable seeded randomness.
//!
//! Every random choice in the crate draws from xoshiro256++ seeded through
//! SplitMix64 (`seed_from_u64`), so fixtures reproduce across platforms and
//! can be regenerated by other implementations of the same generator.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type SeededRng = Xoshiro256PlusPlus;

pub fn seeded(seed: u64) -> SeededRng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Approximate standard normal draw: sum of twelve uniforms minus six.
///
/// Uses only additions, unlike ziggurat samplers whose rare tail branches
/// call `exp`/`ln`, so outputs are bit-identical on every IEEE-754 platform.
pub fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    (0..12).map(|_| rng.random::<f64>()).sum::<f64>() - 6.0
}
