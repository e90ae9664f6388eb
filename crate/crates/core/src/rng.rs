//! Seeded random streams.
//!
//! Generation draws from counter-based streams: every random quantity is a
//! pure function of `(seed, domain, a, b, slot)`, so traces can be produced
//! in any order (or in parallel) with identical results. Variable-length
//! draws (Dirichlet rows) get a ChaCha stream seeded from the same kind of
//! key.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Real;

/// Separates the independent families of draws that share one seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Theta = 1,
    Phi = 2,
    Psi = 3,
    Tau = 4,
    Token = 5,
}

/// Token-level draw slots.
pub mod slot {
    pub const TRAIT: u64 = 0;
    pub const EVENT: u64 = 1;
    pub const TIME: u64 = 2;
    pub const LEVEL: u64 = 3;
}

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes a key tuple into 64 well-distributed bits.
#[inline]
pub fn key_hash(seed: u64, domain: Domain, a: u64, b: u64, slot: u64) -> u64 {
    let mut h = splitmix64(seed);
    for word in [domain as u64, a, b, slot] {
        h = splitmix64(h ^ word);
    }
    h
}

/// Uniform in `[0, 1)` keyed by the tuple.
#[inline]
pub fn keyed_uniform(seed: u64, domain: Domain, a: u64, b: u64, slot: u64) -> f64 {
    (key_hash(seed, domain, a, b, slot) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A sequential stream for the keyed position.
pub fn keyed_stream(seed: u64, domain: Domain, a: u64, b: u64) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    for (i, chunk) in bytes.chunks_mut(8).enumerate() {
        chunk.copy_from_slice(&key_hash(seed, domain, a, b, i as u64).to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

/// Stream used by the Gibbs sampler.
pub fn chain_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Picks an index from unnormalized nonnegative weights with one uniform
/// `u ∈ [0, 1)`, by a cumulative scan.
///
/// Falls back to the last positive weight if rounding lets the scan run off
/// the end. Returns `None` when no weight is positive.
#[inline]
pub fn categorical_from_uniform<F: Real>(weights: &[F], u: F) -> Option<usize> {
    let total: F = weights.iter().copied().sum();
    if total <= F::zero() || !total.is_finite() {
        return None;
    }
    let target = u * total;
    let mut acc = F::zero();
    let mut last_positive = None;
    for (k, &w) in weights.iter().enumerate() {
        if w > F::zero() {
            acc = acc + w;
            last_positive = Some(k);
            if target < acc {
                return Some(k);
            }
        }
    }
    last_positive
}

/// [`categorical_from_uniform`] drawing the uniform from `rng`.
#[inline]
pub fn sample_categorical<F: Real, R: RngCore + ?Sized>(weights: &[F], rng: &mut R) -> Option<usize> {
    let u: f64 = rng.random();
    categorical_from_uniform(weights, F::lit(u))
}

/// One draw from a symmetric-or-not Dirichlet with the given concentrations,
/// returned in `F`.
///
/// Gamma variates are drawn in log space (`G(a) = G(a+1)·U^{1/a}`) and
/// normalized with log-sum-exp so that tiny concentrations cannot underflow
/// every component to zero.
pub fn sample_dirichlet<F: Real, R: Rng + ?Sized>(concentrations: &[f64], rng: &mut R) -> Vec<F> {
    use rand_distr::{Distribution, Gamma};
    let logs: Vec<f64> = concentrations
        .iter()
        .map(|&a| {
            let g = Gamma::new(a + 1.0, 1.0).expect("positive concentration");
            let x: f64 = g.sample(rng);
            let u: f64 = rng.random::<f64>();
            // u in [0,1): map to (0,1] to keep ln finite
            x.ln() + (1.0 - u).ln() / a
        })
        .collect();
    let norm = crate::scalar::log_sum_exp(&logs);
    logs.iter().map(|&l| F::lit((l - norm).exp())).collect()
}
