//! Counter-based random number generation.
//!
//! Every random quantity in the laboratory is a pure function of
//! `(seed, stream tag, unit, step, component)`. There is no generator
//! state: draws are produced by hashing the counter tuple through two
//! rounds of the splitmix64 finalizer. This gives
//!
//! - bit-exact reproducibility from the seed alone,
//! - common random numbers across population sizes (the common-noise
//!   stream is keyed independently of `n`),
//! - schedule independence: parallel workers can draw any subset of the
//!   streams in any order.
//!
//! Normal variates use the Box-Muller transform on two decorrelated
//! uniforms derived from the same counter tuple.

/// Stream tags keep the substreams disjoint by construction.
pub mod stream {
    /// Common-noise increments dB (unit index unused).
    pub const COMMON: u64 = 0;
    /// Idiosyncratic increments dW, unit = player index.
    pub const IDIOSYNCRATIC: u64 = 1;
    /// Initial states, unit = player index.
    pub const INITIAL: u64 = 2;
    /// Idiosyncratic increments for exogenous-environment particle clouds.
    pub const MKV_W: u64 = 3;
    /// Initial states for exogenous-environment particle clouds.
    pub const MKV_X0: u64 = 4;
    /// Common-noise scenario paths, unit = scenario id.
    pub const SCENARIO: u64 = 5;
    /// Assumption-validator sampling.
    pub const VALIDATION: u64 = 6;
    /// Random projection directions for sliced distances.
    pub const PROJECTION: u64 = 7;
    /// Random-search table policies in the best-response comparator.
    pub const SEARCH: u64 = 8;
}

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Hash a counter tuple to a single word. Each position gets its own salt
/// so that permuted tuples do not collide.
#[inline]
pub fn tuple_hash(words: &[u64]) -> u64 {
    let mut h = 0x243f6a8885a308d3u64; // pi fraction, arbitrary non-zero start
    for (i, &w) in words.iter().enumerate() {
        let salted = w ^ (i as u64 + 1).wrapping_mul(0x9e3779b97f4a7c15);
        h = splitmix(h ^ splitmix(salted));
    }
    h
}

/// Derive a child seed, e.g. per (n, replica) bundle seeds.
#[inline]
pub fn derive_seed(seed: u64, words: &[u64]) -> u64 {
    let mut all = Vec::with_capacity(words.len() + 1);
    all.push(seed);
    all.extend_from_slice(words);
    tuple_hash(&all)
}

/// Uniform draw in the open interval (0, 1).
#[inline]
pub fn uniform(seed: u64, tag: u64, unit: u64, step: u64, comp: u64) -> f64 {
    let x = tuple_hash(&[seed, tag, unit, step, comp]);
    // 53 mantissa bits, offset by half an ulp to stay strictly inside (0,1)
    ((x >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Standard normal draw for the counter tuple (Box-Muller, cosine branch).
#[inline]
pub fn standard_normal(seed: u64, tag: u64, unit: u64, step: u64, comp: u64) -> f64 {
    let u1 = uniform(seed, tag, unit, step, comp.wrapping_mul(2));
    let u2 = uniform(seed, tag, unit, step, comp.wrapping_mul(2).wrapping_add(1));
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
