//! Proper scoring rules.
//!
//! The CRPS is available three ways: closed form for normal mixtures,
//! a Monte-Carlo estimator for arbitrary continuous mixtures given
//! component samples, and a numeric-quadrature oracle that integrates the
//! defining `∫ (P(x) − 1{y ≤ x})² dx` directly. The quadrature form is the
//! in-crate referee for the other two.
//!
//! For quantile-format forecasts the interval score and the weighted
//! interval score (WIS) are provided; with densifying interval sets the
//! WIS approaches the CRPS.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dist::SimplexWeights;
use crate::error::{Error, Result};
use crate::math::folded_normal_mean;

/// Densities below this floor are clipped before taking the log, capping
/// the log score at `−ln(1e-15) ≈ 34.54`.
pub const DENSITY_FLOOR: f64 = 1e-15;

/// Closed-form CRPS of a single normal forecast:
/// `σ · [z(2Φ(z) − 1) + 2φ(z) − 1/√π]` with `z = (y − μ)/σ`.
pub fn crps_normal(mu: f64, sigma: f64, y: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("sigma must be positive (got {sigma})")));
    }
    let s2 = sigma * sigma;
    Ok(folded_normal_mean(y - mu, s2) - 0.5 * folded_normal_mean(0.0, 2.0 * s2))
}

/// Closed-form CRPS of a normal mixture:
/// `Σ_c w_c E|X_c − y| − ½ Σ_{c,c'} w_c w_{c'} E|X_c − X_{c'}|`,
/// with each expectation the folded-normal mean
/// `A(m, s²) = m(2Φ(m/s) − 1) + 2sφ(m/s)`.
pub fn crps_normal_mixture(
    mus: &[f64],
    sigmas: &[f64],
    w: &SimplexWeights,
    y: f64,
) -> Result<f64> {
    let c = mus.len();
    if sigmas.len() != c || w.len() != c {
        return Err(Error::dimension(format!(
            "mus ({c}), sigmas ({}), weights ({}) must agree",
            sigmas.len(),
            w.len()
        )));
    }
    if sigmas.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::invalid("all sigmas must be positive"));
    }
    let terms = MixtureCrpsTerms::from_normals(mus, sigmas)?;
    let abs_obs: Vec<f64> = mus
        .iter()
        .zip(sigmas)
        .map(|(&m, &s)| folded_normal_mean(y - m, s * s))
        .collect();
    terms.crps(&abs_obs, w)
}

/// Monte-Carlo estimates of the pairwise expectations `E|X_c − X_{c'}|`
/// entering the mixture CRPS. Built once per sample set and reused across
/// candidate weight vectors: scoring a new `w` is a C×C quadratic form.
#[derive(Clone, Debug)]
pub struct MixtureCrpsTerms {
    n_components: usize,
    /// Row-major C×C, symmetric, nonnegative.
    cross_abs: Vec<f64>,
}

impl MixtureCrpsTerms {
    /// Estimates the cross terms from component samples.
    ///
    /// Off-diagonal entries pair one independent permutation of each array
    /// (n pairs, not n²); diagonal entries pair a permutation of the array
    /// against its own cyclic shift, so every pair holds two distinct
    /// draws. Deterministic given the RNG state.
    pub fn from_samples<R: Rng + ?Sized>(samples: &[Vec<f64>], rng: &mut R) -> Result<Self> {
        let c = samples.len();
        if c == 0 {
            return Err(Error::invalid("need at least one component sample set"));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.len() < 2 {
                return Err(Error::invalid(format!(
                    "component {i} has {} samples; need at least 2",
                    s.len()
                )));
            }
        }
        let mut permuted: Vec<Vec<f64>> = Vec::with_capacity(c);
        for s in samples {
            let mut p = s.clone();
            p.shuffle(rng);
            permuted.push(p);
        }
        let mut cross = vec![0.0; c * c];
        for i in 0..c {
            let pi = &permuted[i];
            let n = pi.len();
            let diag = (0..n)
                .map(|k| (pi[k] - pi[(k + 1) % n]).abs())
                .sum::<f64>()
                / n as f64;
            cross[i * c + i] = diag;
            for j in (i + 1)..c {
                let pj = &permuted[j];
                let m = n.min(pj.len());
                let v = (0..m).map(|k| (pi[k] - pj[k]).abs()).sum::<f64>() / m as f64;
                cross[i * c + j] = v;
                cross[j * c + i] = v;
            }
        }
        Ok(Self {
            n_components: c,
            cross_abs: cross,
        })
    }

    /// Exact cross terms for normal components:
    /// `E|X_c − X_{c'}| = A(μ_c − μ_{c'}, σ_c² + σ_{c'}²)`.
    pub fn from_normals(mus: &[f64], sigmas: &[f64]) -> Result<Self> {
        let c = mus.len();
        if sigmas.len() != c || c == 0 {
            return Err(Error::dimension("mus and sigmas must agree and be nonempty"));
        }
        let mut cross = vec![0.0; c * c];
        for i in 0..c {
            for j in i..c {
                let v = folded_normal_mean(
                    mus[i] - mus[j],
                    sigmas[i] * sigmas[i] + sigmas[j] * sigmas[j],
                );
                cross[i * c + j] = v;
                cross[j * c + i] = v;
            }
        }
        Ok(Self {
            n_components: c,
            cross_abs: cross,
        })
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn cross_abs(&self, c: usize, cp: usize) -> f64 {
        self.cross_abs[c * self.n_components + cp]
    }

    /// Mixture CRPS from cached cross terms and per-observation first
    /// terms `abs_to_obs[c] ≈ E|X_c − y|`.
    pub fn crps(&self, abs_to_obs: &[f64], w: &SimplexWeights) -> Result<f64> {
        if abs_to_obs.len() != self.n_components || w.len() != self.n_components {
            return Err(Error::dimension(format!(
                "terms built for {} components, got abs_to_obs {} / weights {}",
                self.n_components,
                abs_to_obs.len(),
                w.len()
            )));
        }
        Ok(self.crps_raw(abs_to_obs, w.as_slice()))
    }

    /// Unchecked quadratic form `Σ w_c a_c − ½ wᵀ M w` for hot loops.
    pub(crate) fn crps_raw(&self, abs_to_obs: &[f64], w: &[f64]) -> f64 {
        let c = self.n_components;
        let mut linear = 0.0;
        let mut quad = 0.0;
        for i in 0..c {
            linear += w[i] * abs_to_obs[i];
            let row = &self.cross_abs[i * c..(i + 1) * c];
            let mut acc = 0.0;
            for j in 0..c {
                acc += w[j] * row[j];
            }
            quad += w[i] * acc;
        }
        linear - 0.5 * quad
    }
}

/// Sample mean of `|x_i − y|`; the per-observation linear term of the
/// Monte-Carlo mixture CRPS.
pub fn mean_abs_to_obs(samples: &[f64], y: f64) -> f64 {
    samples.iter().map(|x| (x - y).abs()).sum::<f64>() / samples.len() as f64
}

/// One-shot Monte-Carlo mixture CRPS from component samples. Repeated
/// scoring against the same samples should build [`MixtureCrpsTerms`]
/// once instead.
pub fn crps_mixture_mc<R: Rng + ?Sized>(
    samples: &[Vec<f64>],
    w: &SimplexWeights,
    y: f64,
    rng: &mut R,
) -> Result<f64> {
    let terms = MixtureCrpsTerms::from_samples(samples, rng)?;
    let abs_obs: Vec<f64> = samples.iter().map(|s| mean_abs_to_obs(s, y)).collect();
    terms.crps(&abs_obs, w)
}

/// Trapezoidal evaluation of `∫ (P(x) − 1{y ≤ x})² dx` on `[lo, hi]`,
/// split exactly at `y` so the indicator jump never straddles a cell.
/// Serves as the module's independent oracle.
pub fn crps_numeric(
    cdf: impl Fn(f64) -> f64,
    y: f64,
    lo: f64,
    hi: f64,
    n_grid: usize,
) -> Result<f64> {
    if !(lo < y && y < hi) {
        return Err(Error::invalid(format!(
            "need lo < y < hi (got lo={lo}, y={y}, hi={hi})"
        )));
    }
    if n_grid < 1000 {
        return Err(Error::invalid("n_grid must be at least 1000"));
    }
    let mass_lo = cdf(lo);
    let mass_hi = 1.0 - cdf(hi);
    if mass_lo >= 1e-8 || mass_hi >= 1e-8 {
        return Err(Error::invalid(format!(
            "truncation bounds too tight: cdf(lo)={mass_lo:e}, 1-cdf(hi)={mass_hi:e}"
        )));
    }
    let left_frac = (y - lo) / (hi - lo);
    let n_left = ((n_grid as f64 * left_frac) as usize).clamp(2, n_grid - 2);
    let n_right = n_grid - n_left;
    let trapz = |a: f64, b: f64, n: usize, f: &dyn Fn(f64) -> f64| -> f64 {
        let h = (b - a) / n as f64;
        let mut acc = 0.5 * (f(a) + f(b));
        for k in 1..n {
            acc += f(a + h * k as f64);
        }
        acc * h
    };
    let left = trapz(lo, y, n_left, &|x| {
        let p = cdf(x);
        p * p
    });
    let right = trapz(y, hi, n_right, &|x| {
        let d = cdf(x) - 1.0;
        d * d
    });
    Ok(left + right)
}

/// Negative log density with the default floor of [`DENSITY_FLOOR`].
pub fn log_score(pdf_at_y: f64) -> Result<f64> {
    log_score_with_floor(pdf_at_y, DENSITY_FLOOR)
}

/// Negative log density, flooring the density at `floor` so the score is
/// finite even at zero density.
pub fn log_score_with_floor(pdf_at_y: f64, floor: f64) -> Result<f64> {
    if pdf_at_y.is_nan() || pdf_at_y < 0.0 {
        return Err(Error::invalid(format!(
            "density must be nonnegative (got {pdf_at_y})"
        )));
    }
    Ok(-pdf_at_y.max(floor).ln())
}

/// Interval score for a central `(1 − α)` interval `[l, r]`:
/// `(r − l) + (2/α)(l − y)·1{y < l} + (2/α)(y − r)·1{y > r}`.
pub fn interval_score(l: f64, r: f64, alpha: f64, y: f64) -> Result<f64> {
    if l > r {
        return Err(Error::invalid(format!("interval lower {l} above upper {r}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must be in (0,1), got {alpha}")));
    }
    let mut score = r - l;
    if y < l {
        score += 2.0 / alpha * (l - y);
    } else if y > r {
        score += 2.0 / alpha * (y - r);
    }
    Ok(score)
}

/// A central interval extracted from a symmetric quantile set.
#[derive(Clone, Copy, Debug)]
pub struct CentralInterval {
    /// Nominal level: the interval covers probability `1 − alpha`.
    pub alpha: f64,
    pub lower: f64,
    pub upper: f64,
}

/// A quantile-format forecast with probabilities symmetric around 0.5,
/// yielding a median plus central intervals.
#[derive(Clone, Debug)]
pub struct QuantileForecast {
    probs: Vec<f64>,
    values: Vec<f64>,
    median: f64,
    intervals: Vec<CentralInterval>,
}

const PROB_TOL: f64 = 1e-9;

impl QuantileForecast {
    pub fn new(probs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if probs.len() != values.len() || probs.is_empty() {
            return Err(Error::dimension(format!(
                "probs ({}) and values ({}) must be equal-length and nonempty",
                probs.len(),
                values.len()
            )));
        }
        for (k, &p) in probs.iter().enumerate() {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::invalid(format!("prob {p} outside (0,1)")));
            }
            if k > 0 && p <= probs[k - 1] {
                return Err(Error::invalid("probs must be strictly increasing"));
            }
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("values must be nondecreasing in prob"));
        }
        let median_idx = probs
            .iter()
            .position(|&p| (p - 0.5).abs() <= PROB_TOL)
            .ok_or_else(|| Error::invalid("quantile set must include the median (p = 0.5)"))?;
        let mut intervals = Vec::new();
        for (k, &p) in probs.iter().enumerate() {
            if p < 0.5 - PROB_TOL {
                let partner = probs
                    .iter()
                    .position(|&q| (q - (1.0 - p)).abs() <= PROB_TOL)
                    .ok_or_else(|| {
                        Error::invalid(format!(
                            "probability set not symmetric: {p} has no matching {}",
                            1.0 - p
                        ))
                    })?;
                intervals.push(CentralInterval {
                    alpha: 2.0 * p,
                    lower: values[k],
                    upper: values[partner],
                });
            } else if p > 0.5 + PROB_TOL
                && !probs.iter().any(|&q| (q - (1.0 - p)).abs() <= PROB_TOL)
            {
                return Err(Error::invalid(format!(
                    "probability set not symmetric: {p} has no matching {}",
                    1.0 - p
                )));
            }
        }
        Ok(Self {
            median: values[median_idx],
            probs,
            values,
            intervals,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn median(&self) -> f64 {
        self.median
    }

    pub fn intervals(&self) -> &[CentralInterval] {
        &self.intervals
    }
}

/// Weighted interval score over the forecast's central intervals:
/// `(½|y − median| + Σ_i (α_i/2)·IS_{α_i}) / (I + ½)`.
pub fn weighted_interval_score(qf: &QuantileForecast, y: f64) -> f64 {
    let intervals = qf.intervals();
    let mut acc = 0.5 * (y - qf.median()).abs();
    for iv in intervals {
        let is = interval_score(iv.lower, iv.upper, iv.alpha, y)
            .expect("intervals validated at construction");
        acc += 0.5 * iv.alpha * is;
    }
    acc / (intervals.len() as f64 + 0.5)
}
