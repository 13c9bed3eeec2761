//! Small numeric helpers shared across the crate: standard-normal
//! functions, the folded-normal mean used by the closed-form CRPS, simple
//! descriptive statistics, and deterministic seed derivation.

use rand_chacha::ChaCha12Rng;
use rand_chacha::rand_core::SeedableRng;
use statrs::function::erf;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erf::erfc(-z / SQRT_2)
}

/// Standard normal quantile function. `p` must lie in (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    -SQRT_2 * erf::erfc_inv(2.0 * p)
}

/// Mean absolute value of a normal variable: `E|Z|` for `Z ~ N(m, s2)`.
///
/// This is the building block of the closed-form mixture CRPS: with
/// `s = sqrt(s2)` it equals `m (2Φ(m/s) − 1) + 2 s φ(m/s)`, and collapses
/// to `|m|` in the degenerate `s → 0` limit.
pub fn folded_normal_mean(m: f64, s2: f64) -> f64 {
    let s = s2.max(0.0).sqrt();
    if s < 1e-300 {
        return m.abs();
    }
    let z = m / s;
    m * (2.0 * normal_cdf(z) - 1.0) + 2.0 * s * normal_pdf(z)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance (n − 1 denominator). Zero for fewer than two values.
pub fn variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

/// Median of a slice (averaging the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("median: NaN in data"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// SplitMix64 step; statelessly mixes a word into a well-scrambled output.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives an independent seed from a master seed, a stream label, and an
/// index. All randomness in the crate flows through this so that a single
/// master seed reproduces every sub-experiment regardless of execution
/// order or parallelism.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut h = splitmix64(master);
    for &b in label.as_bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    splitmix64(h ^ index)
}

/// A ChaCha RNG seeded via [`derive_seed`].
pub fn derived_rng(master: u64, label: &str, index: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(master, label, index))
}
