//! Probability-integral-transform diagnostics: the PIT itself, its
//! histogram, and the 1-Wasserstein distance of the empirical PIT law to
//! Uniform(0,1) (the UWD1), computed from sorted values against the
//! uniform grid `(2i−1)/(2n)`.

use crate::dist::LinearPool;
use crate::error::{Error, Result};

/// A series of PIT values, one per scored forecast, each in [0,1].
#[derive(Clone, Debug)]
pub struct PitSeries(Vec<f64>);

impl PitSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("PIT series must be nonempty"));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("PIT values must lie in [0,1]"));
        }
        Ok(PitSeries(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// PIT of an observation under the pooled forecast: `P̄(y)`.
pub fn pit(pool: &LinearPool, y: f64) -> f64 {
    pool.cdf(y)
}

/// 1-Wasserstein distance between the empirical law of the series and
/// Uniform(0,1), up to O(1/n) discretization:
/// `(1/n) Σ_i |u_(i) − (2i−1)/(2n)|`.
pub fn uwd1(p: &PitSeries) -> f64 {
    let mut sorted = p.0.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &u)| (u - (2.0 * i as f64 + 1.0) / (2.0 * n)).abs())
        .sum::<f64>()
        / n
}

/// Counts per equal-width bin on [0,1]; the last bin is right-closed so
/// a PIT of exactly 1.0 lands in it. Counts sum to the series length.
pub fn pit_histogram(p: &PitSeries, bins: usize) -> Result<Vec<usize>> {
    if bins == 0 {
        return Err(Error::invalid("bins must be positive"));
    }
    let mut counts = vec![0usize; bins];
    for &v in &p.0 {
        let idx = ((v * bins as f64) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{ComponentForecast, SimplexWeights};
    use crate::math::{derived_rng, normal_cdf};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn pit_is_the_pool_cdf() {
        let pool = LinearPool::new(
            vec![
                ComponentForecast::gaussian(3.0, 1.0).unwrap(),
                ComponentForecast::gaussian(6.5, 1.0).unwrap(),
            ],
            SimplexWeights::new(vec![0.65, 0.35]).unwrap(),
        )
        .unwrap();
        let expect = 0.65 * 0.5 + 0.35 * normal_cdf(-3.5);
        assert_abs_diff_eq!(pit(&pool, 3.0), expect, epsilon = 1e-12);
        assert_abs_diff_eq!(pit(&pool, -1e6), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn uwd1_on_the_uniform_grid_is_zero() {
        let n = 40;
        let values: Vec<f64> = (0..n).map(|i| (2.0 * i as f64 + 1.0) / (2.0 * n as f64)).collect();
        assert_abs_diff_eq!(uwd1(&PitSeries::new(values).unwrap()), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn uwd1_of_all_zeros_is_half() {
        let p = PitSeries::new(vec![0.0; 64]).unwrap();
        assert_abs_diff_eq!(uwd1(&p), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn uwd1_of_uniform_draws_vanishes() {
        let mut rng = derived_rng(3, "uwd1", 0);
        let values: Vec<f64> = (0..100_000).map(|_| rng.gen()).collect();
        let d = uwd1(&PitSeries::new(values).unwrap());
        assert!(d < 0.005, "distance {d}");
    }

    #[test]
    fn uwd1_is_permutation_invariant_and_bounded() {
        let mut rng = derived_rng(5, "uwd1", 1);
        let mut values: Vec<f64> = (0..500).map(|_| rng.gen::<f64>().powi(3)).collect();
        let a = uwd1(&PitSeries::new(values.clone()).unwrap());
        values.reverse();
        values.swap(0, 250);
        let b = uwd1(&PitSeries::new(values).unwrap());
        assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        assert!(a <= 1.0);
    }

    #[test]
    fn uwd1_of_constant_series_matches_direct_summation() {
        for &c in &[0.0, 0.2, 0.5, 0.77, 1.0] {
            let n = 33;
            let p = PitSeries::new(vec![c; n]).unwrap();
            let direct: f64 = (0..n)
                .map(|i| (c - (2.0 * i as f64 + 1.0) / (2.0 * n as f64)).abs())
                .sum::<f64>()
                / n as f64;
            assert_abs_diff_eq!(uwd1(&p), direct, epsilon = 1e-15);
        }
    }

    #[test]
    fn histogram_assigns_bins_correctly() {
        let p = PitSeries::new(vec![0.5]).unwrap();
        let h = pit_histogram(&p, 10).unwrap();
        assert_eq!(h[5], 1);
        assert_eq!(h.iter().sum::<usize>(), 1);

        let p = PitSeries::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(pit_histogram(&p, 2).unwrap(), vec![1, 1]);

        let n = 20;
        let values: Vec<f64> = (0..n).map(|i| (2.0 * i as f64 + 1.0) / (2.0 * n as f64)).collect();
        let h = pit_histogram(&PitSeries::new(values).unwrap(), n).unwrap();
        assert!(h.iter().all(|&c| c == 1));

        assert!(pit_histogram(&p, 0).is_err());
    }

    #[test]
    fn pit_series_validates_range() {
        assert!(PitSeries::new(vec![]).is_err());
        assert!(PitSeries::new(vec![0.5, 1.2]).is_err());
        assert!(PitSeries::new(vec![-0.1]).is_err());
    }
}
