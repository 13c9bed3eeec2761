//! Candidate forecast distributions and their linear pools.
//!
//! A [`ComponentForecast`] is one fully specified predictive distribution:
//! a Gaussian, an empirical sample set, or a piecewise-linear CDF
//! reconstructed from submitted quantiles. A [`LinearPool`] mixes
//! components with [`SimplexWeights`], so its CDF is the weighted sum of
//! the component CDFs.

use rand::Rng;

use crate::error::{Error, Result};
use crate::math;

/// Tolerance on the weight-sum invariant.
const SIMPLEX_TOL: f64 = 1e-9;

/// Upward nudge applied to tied quantile knots to keep the reconstructed
/// CDF invertible.
const TIE_NUDGE: f64 = 1e-9;

/// A nonnegative weight vector summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    /// Validates nonnegativity and `|Σ w − 1| ≤ 1e-9`.
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::invalid("weight vector must be nonempty"));
        }
        if w.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid(format!(
                "weights must sum to 1 (got {sum})"
            )));
        }
        Ok(SimplexWeights(w))
    }

    /// Rescales a nonnegative vector with positive sum onto the simplex.
    pub fn normalized(mut w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::invalid("weight vector must be nonempty"));
        }
        if w.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        let sum: f64 = w.iter().sum();
        if sum <= 0.0 {
            return Err(Error::invalid("weight sum must be positive"));
        }
        for x in &mut w {
            *x /= sum;
        }
        Ok(SimplexWeights(w))
    }

    /// The equal-weight vector `(1/C, ..., 1/C)`.
    pub fn uniform(c: usize) -> Result<Self> {
        if c == 0 {
            return Err(Error::invalid("component count must be positive"));
        }
        Ok(SimplexWeights(vec![1.0 / c as f64; c]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for SimplexWeights {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[derive(Clone, Debug)]
enum Kind {
    Gaussian {
        mu: f64,
        sigma: f64,
    },
    Empirical {
        /// Sorted ascending.
        samples: Vec<f64>,
        /// Silverman-rule bandwidth for the KDE density.
        bandwidth: f64,
    },
    PiecewiseCdf {
        /// Strictly increasing, in (0, 1).
        probs: Vec<f64>,
        /// Strictly increasing after tie nudging.
        quantiles: Vec<f64>,
        tail_rate: f64,
    },
}

/// One candidate predictive distribution, evaluable as CDF/PDF/quantile and
/// sampleable. Immutable after construction.
#[derive(Clone, Debug)]
pub struct ComponentForecast {
    kind: Kind,
}

impl ComponentForecast {
    /// Normal forecast with mean `mu` and standard deviation `sigma > 0`.
    pub fn gaussian(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() || !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::invalid(format!(
                "gaussian requires finite mu and sigma > 0 (got mu={mu}, sigma={sigma})"
            )));
        }
        Ok(Self {
            kind: Kind::Gaussian { mu, sigma },
        })
    }

    /// Empirical forecast from at least two finite draws. Samples are
    /// stored sorted; the CDF linearly interpolates between order
    /// statistics at plotting positions `i/(n−1)` and the density is a
    /// Gaussian KDE with Silverman bandwidth.
    pub fn empirical(mut samples: Vec<f64>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::invalid(format!(
                "empirical forecast needs at least 2 samples (got {})",
                samples.len()
            )));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("empirical samples must be finite"));
        }
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let bandwidth = silverman_bandwidth(&samples);
        Ok(Self {
            kind: Kind::Empirical { samples, bandwidth },
        })
    }

    /// Reconstructs a distribution passing exactly through every
    /// `(quantile_k, prob_k)` knot: linear between knots, exponential
    /// tails with rate `tail_rate` outside them. Tied quantiles are nudged
    /// upward by cumulative 1e-9 increments to keep the CDF invertible.
    pub fn from_quantiles(probs: &[f64], quantiles: &[f64], tail_rate: f64) -> Result<Self> {
        if probs.len() != quantiles.len() {
            return Err(Error::dimension(format!(
                "probs ({}) and quantiles ({}) must have equal length",
                probs.len(),
                quantiles.len()
            )));
        }
        if probs.len() < 2 {
            return Err(Error::invalid("need at least 2 quantile knots"));
        }
        if !tail_rate.is_finite() || tail_rate <= 0.0 {
            return Err(Error::invalid("tail_rate must be positive"));
        }
        for (k, &p) in probs.iter().enumerate() {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::invalid(format!(
                    "prob {p} at knot {k} outside (0,1)"
                )));
            }
            if k > 0 && p <= probs[k - 1] {
                return Err(Error::invalid("probs must be strictly increasing"));
            }
        }
        let mut q = Vec::with_capacity(quantiles.len());
        for (k, &v) in quantiles.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::invalid("quantiles must be finite"));
            }
            if k > 0 && v < quantiles[k - 1] {
                return Err(Error::invalid("quantiles must be nondecreasing"));
            }
            let nudged = if k > 0 && v <= q[k - 1] {
                q[k - 1] + TIE_NUDGE
            } else {
                v
            };
            q.push(nudged);
        }
        Ok(Self {
            kind: Kind::PiecewiseCdf {
                probs: probs.to_vec(),
                quantiles: q,
                tail_rate,
            },
        })
    }

    /// Default tail rate for reconstructed CDFs: `1 / (q_K − q_1 + 1)`.
    pub fn default_tail_rate(quantiles: &[f64]) -> f64 {
        let span = quantiles[quantiles.len() - 1] - quantiles[0];
        1.0 / (span + 1.0)
    }

    /// `(mu, sigma)` when the forecast is Gaussian.
    pub fn as_gaussian(&self) -> Option<(f64, f64)> {
        match self.kind {
            Kind::Gaussian { mu, sigma } => Some((mu, sigma)),
            _ => None,
        }
    }

    /// The stored draws when the forecast is an empirical sample set.
    pub fn samples(&self) -> Option<&[f64]> {
        match &self.kind {
            Kind::Empirical { samples, .. } => Some(samples),
            _ => None,
        }
    }

    /// CDF at `x`; total on the reals, nondecreasing, with limits 0 and 1.
    pub fn cdf(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Gaussian { mu, sigma } => math::normal_cdf((x - mu) / sigma),
            Kind::Empirical { samples, .. } => empirical_cdf(samples, x),
            Kind::PiecewiseCdf {
                probs,
                quantiles,
                tail_rate,
            } => piecewise_cdf(probs, quantiles, *tail_rate, x),
        }
    }

    /// Density at `x`. For empirical forecasts this is a Gaussian KDE, so
    /// it is smooth but only approximately consistent with the
    /// interpolated CDF.
    pub fn pdf(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Gaussian { mu, sigma } => {
                math::normal_pdf((x - mu) / sigma) / sigma
            }
            Kind::Empirical { samples, bandwidth } => kde_pdf(samples, *bandwidth, x),
            Kind::PiecewiseCdf {
                probs,
                quantiles,
                tail_rate,
            } => piecewise_pdf(probs, quantiles, *tail_rate, x),
        }
    }

    /// Quantile function. `p` is clamped into `(0, 1)` by 1e-15 so the
    /// result is always finite.
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(1e-15, 1.0 - 1e-15);
        match &self.kind {
            Kind::Gaussian { mu, sigma } => mu + sigma * math::normal_quantile(p),
            Kind::Empirical { samples, .. } => empirical_quantile(samples, p),
            Kind::PiecewiseCdf {
                probs,
                quantiles,
                tail_rate,
            } => piecewise_quantile(probs, quantiles, *tail_rate, p),
        }
    }

    /// Draws `n` i.i.d. values; deterministic given the RNG state.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        match &self.kind {
            Kind::Gaussian { mu, sigma } => (0..n)
                .map(|_| {
                    let z: f64 = rng.sample(rand_distr::StandardNormal);
                    mu + sigma * z
                })
                .collect(),
            // Inverse-CDF draws are exact for the piecewise-linear CDFs
            // used by both remaining kinds.
            _ => (0..n).map(|_| self.quantile(rng.gen::<f64>())).collect(),
        }
    }
}

fn silverman_bandwidth(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    let sd = math::variance(sorted).sqrt();
    let iqr = empirical_quantile(sorted, 0.75) - empirical_quantile(sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * (n as f64).powf(-0.2);
    h.max(1e-12)
}

fn empirical_cdf(sorted: &[f64], x: f64) -> f64 {
    let n = sorted.len();
    if x < sorted[0] {
        return 0.0;
    }
    if x >= sorted[n - 1] {
        return 1.0;
    }
    // Last index with sorted[i] <= x.
    let i = sorted.partition_point(|&v| v <= x) - 1;
    let pi = i as f64 / (n - 1) as f64;
    if sorted[i] == x {
        return pi;
    }
    let (x0, x1) = (sorted[i], sorted[i + 1]);
    let p1 = (i + 1) as f64 / (n - 1) as f64;
    pi + (p1 - pi) * (x - x0) / (x1 - x0)
}

fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let t = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let i = (t.floor() as usize).min(n - 2);
    let frac = t - i as f64;
    sorted[i] + frac * (sorted[i + 1] - sorted[i])
}

fn kde_pdf(sorted: &[f64], h: f64, x: f64) -> f64 {
    // Kernel mass beyond 8 bandwidths is below 1e-15; restrict the sum.
    let lo = sorted.partition_point(|&v| v < x - 8.0 * h);
    let hi = sorted.partition_point(|&v| v <= x + 8.0 * h);
    let mut acc = 0.0;
    for &v in &sorted[lo..hi] {
        acc += math::normal_pdf((x - v) / h);
    }
    acc / (sorted.len() as f64 * h)
}

fn piecewise_cdf(probs: &[f64], quantiles: &[f64], tail_rate: f64, x: f64) -> f64 {
    let k = probs.len();
    if x < quantiles[0] {
        return probs[0] * (tail_rate * (x - quantiles[0])).exp();
    }
    if x >= quantiles[k - 1] {
        return 1.0 - (1.0 - probs[k - 1]) * (-tail_rate * (x - quantiles[k - 1])).exp();
    }
    let i = quantiles.partition_point(|&q| q <= x) - 1;
    let frac = (x - quantiles[i]) / (quantiles[i + 1] - quantiles[i]);
    probs[i] + frac * (probs[i + 1] - probs[i])
}

fn piecewise_pdf(probs: &[f64], quantiles: &[f64], tail_rate: f64, x: f64) -> f64 {
    let k = probs.len();
    if x < quantiles[0] {
        return probs[0] * tail_rate * (tail_rate * (x - quantiles[0])).exp();
    }
    if x >= quantiles[k - 1] {
        return (1.0 - probs[k - 1]) * tail_rate * (-tail_rate * (x - quantiles[k - 1])).exp();
    }
    let i = quantiles.partition_point(|&q| q <= x) - 1;
    (probs[i + 1] - probs[i]) / (quantiles[i + 1] - quantiles[i])
}

fn piecewise_quantile(probs: &[f64], quantiles: &[f64], tail_rate: f64, p: f64) -> f64 {
    let k = probs.len();
    if p < probs[0] {
        return quantiles[0] + (p / probs[0]).ln() / tail_rate;
    }
    if p > probs[k - 1] {
        return quantiles[k - 1] - ((1.0 - p) / (1.0 - probs[k - 1])).ln() / tail_rate;
    }
    let i = probs.partition_point(|&q| q <= p).clamp(1, k - 1) - 1;
    let frac = (p - probs[i]) / (probs[i + 1] - probs[i]);
    quantiles[i] + frac * (quantiles[i + 1] - quantiles[i])
}

/// A mixture of component forecasts: `P̄(x) = Σ_c w_c P_c(x)`.
#[derive(Clone, Debug)]
pub struct LinearPool {
    components: Vec<ComponentForecast>,
    weights: SimplexWeights,
}

impl LinearPool {
    pub fn new(components: Vec<ComponentForecast>, weights: SimplexWeights) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("pool must have at least one component"));
        }
        if components.len() != weights.len() {
            return Err(Error::dimension(format!(
                "{} components but {} weights",
                components.len(),
                weights.len()
            )));
        }
        Ok(Self {
            components,
            weights,
        })
    }

    pub fn components(&self) -> &[ComponentForecast] {
        &self.components
    }

    pub fn weights(&self) -> &SimplexWeights {
        &self.weights
    }

    /// Mixture CDF: `Σ_c w_c P_c(x)`, clamped against the ≤1e-9 weight-sum
    /// drift the simplex invariant allows.
    pub fn cdf(&self, x: f64) -> f64 {
        self.components
            .iter()
            .zip(self.weights.as_slice())
            .map(|(c, &w)| w * c.cdf(x))
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }

    /// Mixture density: `Σ_c w_c p_c(x)`.
    pub fn pdf(&self, x: f64) -> f64 {
        self.components
            .iter()
            .zip(self.weights.as_slice())
            .map(|(c, &w)| w * c.pdf(x))
            .sum()
    }

    /// Draws from the mixture: pick a component by weight, then sample it.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let mut cum = Vec::with_capacity(self.weights.len());
        let mut acc = 0.0;
        for &w in self.weights.as_slice() {
            acc += w;
            cum.push(acc);
        }
        (0..n)
            .map(|_| {
                let u: f64 = rng.gen();
                let idx = cum.partition_point(|&c| c < u).min(cum.len() - 1);
                self.components[idx].sample(1, rng)[0]
            })
            .collect()
    }
}
