//! Empirical risk of a candidate weight vector: the mean CRPS of the
//! pooled forecast over observed data, either unweighted (i.i.d. mode) or
//! geometrically discounted so recent forecasts dominate (dynamic mode).
//!
//! Because the mixture CRPS is linear-plus-quadratic in the weights, a
//! [`RiskContext`] precomputes, per observation, the component terms
//! `E|X_c − y_t|` and `E|X_c − X_{c'}|` and aggregates them once. After
//! construction every risk evaluation is a C×C quadratic form, which is
//! what keeps the posterior sampler's inner loop cheap.

use crate::dist::{ComponentForecast, SimplexWeights};
use crate::error::{Error, Result};
use crate::math::{derived_rng, folded_normal_mean};
use crate::scoring::{mean_abs_to_obs, MixtureCrpsTerms};

/// Default geometric discount for the dynamic risk.
pub const DEFAULT_DISCOUNT: f64 = 0.98;

/// How pool CRPS terms are computed from the components.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScoreBackend {
    /// Exact folded-normal expectations; requires every component to be
    /// Gaussian.
    ClosedFormNormalMixture,
    /// Monte-Carlo expectations. Empirical components contribute their
    /// stored samples; other kinds are sampled `draws` times with RNG
    /// streams derived from `seed`, so the context is deterministic.
    MonteCarlo { draws: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RiskMode {
    Iid,
    Dynamic,
}

/// Immutable scoring context: observations, per-time components, and the
/// precomputed CRPS terms. Construction does all the heavy work.
#[derive(Clone, Debug)]
pub struct RiskContext {
    mode: RiskMode,
    discount: f64,
    backend: ScoreBackend,
    observations: Vec<f64>,
    n_components: usize,
    /// One per time point in dynamic mode; a single entry in iid mode.
    terms: Vec<MixtureCrpsTerms>,
    /// `abs_to_obs` vector per observation.
    obs_linear: Vec<Vec<f64>>,
    /// Maps observation index to its entry in `terms`.
    terms_idx: Vec<usize>,
    /// Discount-weighted mean of `obs_linear` (the risk's linear part).
    agg_linear: Vec<f64>,
    /// Discount-weighted mean of cross matrices (row-major C×C).
    agg_cross: Vec<f64>,
}

impl RiskContext {
    /// I.i.d. risk: one fixed component set scored against every
    /// observation with equal weight.
    pub fn iid(
        components: Vec<ComponentForecast>,
        observations: Vec<f64>,
        backend: ScoreBackend,
    ) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("need at least one component"));
        }
        if observations.is_empty() {
            return Err(Error::invalid("need at least one observation"));
        }
        if observations.iter().any(|y| !y.is_finite()) {
            return Err(Error::invalid("observations must be finite"));
        }
        let prepared = prepare_components(&components, 0, backend)?;
        let obs_linear: Vec<Vec<f64>> = observations
            .iter()
            .map(|&y| prepared.abs_to_obs(y))
            .collect();
        let terms = vec![prepared.terms];
        let terms_idx = vec![0; observations.len()];
        let mut ctx = Self {
            mode: RiskMode::Iid,
            discount: 1.0,
            backend,
            observations,
            n_components: components.len(),
            terms,
            obs_linear,
            terms_idx,
            agg_linear: Vec::new(),
            agg_cross: Vec::new(),
        };
        ctx.aggregate();
        Ok(ctx)
    }

    /// Dynamic risk: per-time component sets, discounted by
    /// `discount^(T−t)` so the most recent observation carries weight 1.
    pub fn dynamic(
        components_per_time: Vec<Vec<ComponentForecast>>,
        observations: Vec<f64>,
        discount: f64,
        backend: ScoreBackend,
    ) -> Result<Self> {
        if components_per_time.is_empty() {
            return Err(Error::invalid("need at least one time point"));
        }
        if components_per_time.len() != observations.len() {
            return Err(Error::dimension(format!(
                "{} component sets but {} observations",
                components_per_time.len(),
                observations.len()
            )));
        }
        if !(discount > 0.0 && discount <= 1.0) {
            return Err(Error::invalid(format!(
                "discount must lie in (0,1], got {discount}"
            )));
        }
        if observations.iter().any(|y| !y.is_finite()) {
            return Err(Error::invalid("observations must be finite"));
        }
        let c = components_per_time[0].len();
        if c == 0 {
            return Err(Error::invalid("need at least one component"));
        }
        if components_per_time.iter().any(|set| set.len() != c) {
            return Err(Error::dimension(
                "per-time component count must be constant",
            ));
        }
        let mut terms = Vec::with_capacity(components_per_time.len());
        let mut obs_linear = Vec::with_capacity(observations.len());
        for (t, (set, &y)) in components_per_time.iter().zip(&observations).enumerate() {
            let prepared = prepare_components(set, t as u64, backend)?;
            obs_linear.push(prepared.abs_to_obs(y));
            terms.push(prepared.terms);
        }
        let terms_idx = (0..observations.len()).collect();
        let mut ctx = Self {
            mode: RiskMode::Dynamic,
            discount,
            backend,
            observations,
            n_components: c,
            terms,
            obs_linear,
            terms_idx,
            agg_linear: Vec::new(),
            agg_cross: Vec::new(),
        };
        ctx.aggregate();
        Ok(ctx)
    }

    fn aggregate(&mut self) {
        let c = self.n_components;
        let n = self.observations.len();
        let mut linear = vec![0.0; c];
        let mut cross = vec![0.0; c * c];
        for (i, abs) in self.obs_linear.iter().enumerate() {
            let disc = self.weight_at(i);
            for k in 0..c {
                linear[k] += disc * abs[k];
            }
            let t = &self.terms[self.terms_idx[i]];
            for a in 0..c {
                for b in 0..c {
                    cross[a * c + b] += disc * t.cross_abs(a, b);
                }
            }
        }
        let inv_n = 1.0 / n as f64;
        linear.iter_mut().for_each(|v| *v *= inv_n);
        cross.iter_mut().for_each(|v| *v *= inv_n);
        self.agg_linear = linear;
        self.agg_cross = cross;
    }

    /// Discount weight of observation `i`: `α^(T−1−i)` (1 for iid).
    fn weight_at(&self, i: usize) -> f64 {
        match self.mode {
            RiskMode::Iid => 1.0,
            RiskMode::Dynamic => self
                .discount
                .powi((self.observations.len() - 1 - i) as i32),
        }
    }

    pub fn mode(&self) -> RiskMode {
        self.mode
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn backend(&self) -> ScoreBackend {
        self.backend
    }

    pub fn n_obs(&self) -> usize {
        self.observations.len()
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    /// The risk under the configured mode. Validates the weight length.
    pub fn risk(&self, w: &SimplexWeights) -> Result<f64> {
        if w.len() != self.n_components {
            return Err(Error::dimension(format!(
                "context has {} components, weights {}",
                self.n_components,
                w.len()
            )));
        }
        Ok(self.risk_raw(w.as_slice()))
    }

    /// Quadratic-form risk without simplex validation. The expression
    /// extends smoothly off the simplex, which the finite-difference
    /// minimizer relies on.
    pub fn risk_raw(&self, w: &[f64]) -> f64 {
        let c = self.n_components;
        let mut linear = 0.0;
        let mut quad = 0.0;
        for i in 0..c {
            linear += w[i] * self.agg_linear[i];
            let row = &self.agg_cross[i * c..(i + 1) * c];
            let mut acc = 0.0;
            for j in 0..c {
                acc += w[j] * row[j];
            }
            quad += w[i] * acc;
        }
        linear - 0.5 * quad
    }

    /// CRPS of the pool with weights `w` against observation `i` alone
    /// (no discounting).
    pub fn pool_crps_at(&self, i: usize, w: &SimplexWeights) -> Result<f64> {
        if i >= self.observations.len() {
            return Err(Error::invalid(format!("observation index {i} out of range")));
        }
        self.terms[self.terms_idx[i]].crps(&self.obs_linear[i], w)
    }

    /// Assembles a context from already-computed per-observation terms.
    /// Drivers that score incrementally (hub weeks, simulation steps)
    /// cache one [`MixtureCrpsTerms`] per time point and rebuild contexts
    /// cheaply as the window grows.
    pub(crate) fn from_parts(
        mode: RiskMode,
        discount: f64,
        observations: Vec<f64>,
        terms: Vec<MixtureCrpsTerms>,
        obs_linear: Vec<Vec<f64>>,
        terms_idx: Vec<usize>,
    ) -> Result<Self> {
        if observations.is_empty()
            || obs_linear.len() != observations.len()
            || terms_idx.len() != observations.len()
            || terms.is_empty()
        {
            return Err(Error::dimension("from_parts: inconsistent lengths"));
        }
        let c = terms[0].n_components();
        if terms.iter().any(|t| t.n_components() != c)
            || obs_linear.iter().any(|l| l.len() != c)
            || terms_idx.iter().any(|&i| i >= terms.len())
        {
            return Err(Error::dimension("from_parts: inconsistent shapes"));
        }
        if !(discount > 0.0 && discount <= 1.0) {
            return Err(Error::invalid("discount must lie in (0,1]"));
        }
        let mut ctx = Self {
            mode,
            discount: if mode == RiskMode::Iid { 1.0 } else { discount },
            backend: ScoreBackend::MonteCarlo { draws: 2, seed: 0 },
            observations,
            n_components: c,
            terms,
            obs_linear,
            terms_idx,
            agg_linear: Vec::new(),
            agg_cross: Vec::new(),
        };
        ctx.aggregate();
        Ok(ctx)
    }

    /// A context over a subset of observation indices (strictly
    /// increasing), reusing the precomputed terms. In dynamic mode the
    /// subsequence is re-discounted over its own length.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::invalid("subset must be nonempty"));
        }
        if indices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("subset indices must be strictly increasing"));
        }
        if *indices.last().unwrap() >= self.observations.len() {
            return Err(Error::invalid("subset index out of range"));
        }
        // Terms can be shared wholesale; only the index map is remapped.
        let mut ctx = Self {
            mode: self.mode,
            discount: self.discount,
            backend: self.backend,
            observations: indices.iter().map(|&i| self.observations[i]).collect(),
            n_components: self.n_components,
            terms: self.terms.clone(),
            obs_linear: indices.iter().map(|&i| self.obs_linear[i].clone()).collect(),
            terms_idx: indices.iter().map(|&i| self.terms_idx[i]).collect(),
            agg_linear: Vec::new(),
            agg_cross: Vec::new(),
        };
        ctx.aggregate();
        Ok(ctx)
    }
}

/// Per-time prepared scoring state.
struct Prepared {
    terms: MixtureCrpsTerms,
    source: PreparedSource,
}

enum PreparedSource {
    Normals { mus: Vec<f64>, sigmas: Vec<f64> },
    Samples(Vec<Vec<f64>>),
}

impl Prepared {
    fn abs_to_obs(&self, y: f64) -> Vec<f64> {
        match &self.source {
            PreparedSource::Normals { mus, sigmas } => mus
                .iter()
                .zip(sigmas)
                .map(|(&m, &s)| folded_normal_mean(y - m, s * s))
                .collect(),
            PreparedSource::Samples(samples) => {
                samples.iter().map(|s| mean_abs_to_obs(s, y)).collect()
            }
        }
    }
}

fn prepare_components(
    components: &[ComponentForecast],
    time_index: u64,
    backend: ScoreBackend,
) -> Result<Prepared> {
    match backend {
        ScoreBackend::ClosedFormNormalMixture => {
            let mut mus = Vec::with_capacity(components.len());
            let mut sigmas = Vec::with_capacity(components.len());
            for (c, f) in components.iter().enumerate() {
                let (mu, sigma) = f.as_gaussian().ok_or_else(|| {
                    Error::invalid(format!(
                        "closed-form backend requires Gaussian components (component {c} is not)"
                    ))
                })?;
                mus.push(mu);
                sigmas.push(sigma);
            }
            let terms = MixtureCrpsTerms::from_normals(&mus, &sigmas)?;
            Ok(Prepared {
                terms,
                source: PreparedSource::Normals { mus, sigmas },
            })
        }
        ScoreBackend::MonteCarlo { draws, seed } => {
            if draws < 2 {
                return Err(Error::invalid("Monte-Carlo backend needs draws >= 2"));
            }
            let samples: Vec<Vec<f64>> = components
                .iter()
                .enumerate()
                .map(|(c, f)| match f.samples() {
                    Some(s) => s.to_vec(),
                    None => {
                        let mut rng =
                            derived_rng(seed, "risk-samples", (time_index << 24) | c as u64);
                        f.sample(draws, &mut rng)
                    }
                })
                .collect();
            let mut rng = derived_rng(seed, "risk-terms", time_index);
            let terms = MixtureCrpsTerms::from_samples(&samples, &mut rng)?;
            Ok(Prepared {
                terms,
                source: PreparedSource::Samples(samples),
            })
        }
    }
}

/// I.i.d. empirical risk `(1/n) Σ_i CRPS(P̄_w, y_i)`.
pub fn empirical_risk_iid(ctx: &RiskContext, w: &SimplexWeights) -> Result<f64> {
    if ctx.mode() != RiskMode::Iid {
        return Err(Error::invalid("context is not in iid mode"));
    }
    ctx.risk(w)
}

/// Discounted dynamic risk `(1/T) Σ_t α^(T−t) CRPS(P̄_{t,w}, y_t)`.
pub fn empirical_risk_dynamic(ctx: &RiskContext, w: &SimplexWeights) -> Result<f64> {
    if ctx.mode() != RiskMode::Dynamic {
        return Err(Error::invalid("context is not in dynamic mode"));
    }
    ctx.risk(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::derived_rng;
    use crate::scoring::{crps_normal, crps_normal_mixture};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn gaussians(params: &[(f64, f64)]) -> Vec<ComponentForecast> {
        params
            .iter()
            .map(|&(m, s)| ComponentForecast::gaussian(m, s).unwrap())
            .collect()
    }

    #[test]
    fn iid_risk_with_one_observation_is_single_crps() {
        let comps = gaussians(&[(0.0, 1.0), (2.0, 1.5)]);
        let ctx =
            RiskContext::iid(comps, vec![0.7], ScoreBackend::ClosedFormNormalMixture).unwrap();
        let w = SimplexWeights::new(vec![0.3, 0.7]).unwrap();
        let risk = empirical_risk_iid(&ctx, &w).unwrap();
        let direct = crps_normal_mixture(&[0.0, 2.0], &[1.0, 1.5], &w, 0.7).unwrap();
        assert_abs_diff_eq!(risk, direct, epsilon = 1e-13);
    }

    #[test]
    fn iid_risk_degenerate_weight_is_component_mean_crps() {
        let comps = gaussians(&[(0.0, 1.0), (5.0, 2.0)]);
        let ys = vec![0.4, -1.0, 2.2, 0.0];
        let ctx = RiskContext::iid(comps, ys.clone(), ScoreBackend::ClosedFormNormalMixture)
            .unwrap();
        let w = SimplexWeights::new(vec![0.0, 1.0]).unwrap();
        let risk = empirical_risk_iid(&ctx, &w).unwrap();
        let direct: f64 = ys
            .iter()
            .map(|&y| crps_normal(5.0, 2.0, y).unwrap())
            .sum::<f64>()
            / ys.len() as f64;
        assert_abs_diff_eq!(risk, direct, epsilon = 1e-13);
    }

    #[test]
    fn iid_risk_is_permutation_invariant() {
        let comps = gaussians(&[(0.0, 1.0), (3.0, 1.0), (6.0, 1.0)]);
        let ys = vec![1.0, 4.5, -0.3, 2.0, 3.3];
        let mut rev = ys.clone();
        rev.reverse();
        let w = SimplexWeights::uniform(3).unwrap();
        let a = RiskContext::iid(comps.clone(), ys, ScoreBackend::ClosedFormNormalMixture)
            .unwrap()
            .risk(&w)
            .unwrap();
        let b = RiskContext::iid(comps, rev, ScoreBackend::ClosedFormNormalMixture)
            .unwrap()
            .risk(&w)
            .unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-13);
    }

    #[test]
    fn dynamic_with_unit_discount_is_time_mean() {
        let comps = gaussians(&[(0.0, 1.0), (2.0, 1.0)]);
        let ys = vec![0.5, 1.5, -0.5];
        let per_time: Vec<_> = (0..ys.len()).map(|_| comps.clone()).collect();
        let w = SimplexWeights::new(vec![0.6, 0.4]).unwrap();
        let dynamic =
            RiskContext::dynamic(per_time, ys.clone(), 1.0, ScoreBackend::ClosedFormNormalMixture)
                .unwrap();
        let iid = RiskContext::iid(comps, ys, ScoreBackend::ClosedFormNormalMixture).unwrap();
        assert_abs_diff_eq!(
            empirical_risk_dynamic(&dynamic, &w).unwrap(),
            empirical_risk_iid(&iid, &w).unwrap(),
            epsilon = 1e-13
        );
    }

    #[test]
    fn dynamic_single_time_ignores_discount() {
        let comps = gaussians(&[(0.0, 1.0)]);
        let w = SimplexWeights::new(vec![1.0]).unwrap();
        for &alpha in &[0.5, 0.9, 1.0] {
            let ctx = RiskContext::dynamic(
                vec![comps.clone()],
                vec![0.3],
                alpha,
                ScoreBackend::ClosedFormNormalMixture,
            )
            .unwrap();
            let direct = crps_normal(0.0, 1.0, 0.3).unwrap();
            assert_abs_diff_eq!(ctx.risk(&w).unwrap(), direct, epsilon = 1e-13);
        }
    }

    #[test]
    fn dynamic_discount_matches_geometric_hand_sum() {
        // Constant per-time score s: risk = s · (1/T) Σ_t α^(T−t).
        let comps = gaussians(&[(0.0, 1.0)]);
        let t_len = 50;
        let per_time: Vec<_> = (0..t_len).map(|_| comps.clone()).collect();
        let ys = vec![0.0; t_len]; // same observation: same score each time
        let ctx =
            RiskContext::dynamic(per_time, ys, 0.98, ScoreBackend::ClosedFormNormalMixture)
                .unwrap();
        let w = SimplexWeights::new(vec![1.0]).unwrap();
        let s = crps_normal(0.0, 1.0, 0.0).unwrap();
        let geom: f64 = (0..t_len).map(|t| 0.98f64.powi((t_len - 1 - t) as i32)).sum();
        assert_abs_diff_eq!(
            ctx.risk(&w).unwrap(),
            s * geom / t_len as f64,
            epsilon = 1e-12
        );
    }

    #[test]
    fn dynamic_risk_is_order_sensitive_unless_undiscounted() {
        let comps = gaussians(&[(0.0, 1.0)]);
        let ys = vec![0.0, 3.0, -1.0];
        let mut rev = ys.clone();
        rev.reverse();
        let per_time: Vec<_> = (0..ys.len()).map(|_| comps.clone()).collect();
        let w = SimplexWeights::new(vec![1.0]).unwrap();
        let risk = |obs: Vec<f64>, alpha: f64| {
            RiskContext::dynamic(
                per_time.clone(),
                obs,
                alpha,
                ScoreBackend::ClosedFormNormalMixture,
            )
            .unwrap()
            .risk(&w)
            .unwrap()
        };
        assert!((risk(ys.clone(), 0.9) - risk(rev.clone(), 0.9)).abs() > 1e-6);
        assert_abs_diff_eq!(risk(ys, 1.0), risk(rev, 1.0), epsilon = 1e-13);
    }

    #[test]
    fn mode_mismatch_is_an_error() {
        let comps = gaussians(&[(0.0, 1.0)]);
        let w = SimplexWeights::new(vec![1.0]).unwrap();
        let iid =
            RiskContext::iid(comps.clone(), vec![0.0], ScoreBackend::ClosedFormNormalMixture)
                .unwrap();
        assert!(empirical_risk_dynamic(&iid, &w).is_err());
        let dynamic = RiskContext::dynamic(
            vec![comps],
            vec![0.0],
            0.98,
            ScoreBackend::ClosedFormNormalMixture,
        )
        .unwrap();
        assert!(empirical_risk_iid(&dynamic, &w).is_err());
    }

    #[test]
    fn weight_length_mismatch_is_an_error() {
        let comps = gaussians(&[(0.0, 1.0), (1.0, 1.0)]);
        let ctx =
            RiskContext::iid(comps, vec![0.0], ScoreBackend::ClosedFormNormalMixture).unwrap();
        assert!(ctx.risk(&SimplexWeights::new(vec![1.0]).unwrap()).is_err());
    }

    #[test]
    fn ragged_dynamic_components_rejected() {
        let a = gaussians(&[(0.0, 1.0), (1.0, 1.0)]);
        let b = gaussians(&[(0.0, 1.0)]);
        assert!(RiskContext::dynamic(
            vec![a, b],
            vec![0.0, 1.0],
            0.98,
            ScoreBackend::ClosedFormNormalMixture
        )
        .is_err());
    }

    #[test]
    fn closed_form_backend_rejects_non_gaussian() {
        let comps = vec![ComponentForecast::empirical(vec![0.0, 1.0]).unwrap()];
        assert!(
            RiskContext::iid(comps, vec![0.0], ScoreBackend::ClosedFormNormalMixture).is_err()
        );
    }

    #[test]
    fn monte_carlo_backend_tracks_closed_form() {
        let comps = gaussians(&[(3.0, 1.0), (6.5, 1.0)]);
        let ys = vec![4.0, 2.5, 6.0, 5.1];
        let w = SimplexWeights::new(vec![0.65, 0.35]).unwrap();
        let exact = RiskContext::iid(
            comps.clone(),
            ys.clone(),
            ScoreBackend::ClosedFormNormalMixture,
        )
        .unwrap()
        .risk(&w)
        .unwrap();
        let mc = RiskContext::iid(
            comps,
            ys,
            ScoreBackend::MonteCarlo {
                draws: 200_000,
                seed: 42,
            },
        )
        .unwrap()
        .risk(&w)
        .unwrap();
        assert!((mc - exact).abs() / exact < 0.01, "mc {mc} vs exact {exact}");
    }

    #[test]
    fn risk_is_convex_along_simplex_segments() {
        let mut rng = derived_rng(31, "risk-convex", 0);
        for _ in 0..100 {
            let c = rng.gen_range(2..=5);
            let comps: Vec<_> = (0..c)
                .map(|_| {
                    ComponentForecast::gaussian(
                        rng.gen_range(-3.0..3.0),
                        rng.gen_range(0.4..2.0),
                    )
                    .unwrap()
                })
                .collect();
            let n = rng.gen_range(1..=8);
            let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let ctx =
                RiskContext::iid(comps, ys, ScoreBackend::ClosedFormNormalMixture).unwrap();
            let rand_simplex = |rng: &mut rand_chacha::ChaCha12Rng| {
                SimplexWeights::normalized((0..c).map(|_| rng.gen_range(0.01..1.0)).collect())
                    .unwrap()
            };
            let w1 = rand_simplex(&mut rng);
            let w2 = rand_simplex(&mut rng);
            let (r1, r2) = (ctx.risk(&w1).unwrap(), ctx.risk(&w2).unwrap());
            for &lam in &[0.25, 0.5, 0.75] {
                let mid: Vec<f64> = w1
                    .as_slice()
                    .iter()
                    .zip(w2.as_slice())
                    .map(|(a, b)| lam * a + (1.0 - lam) * b)
                    .collect();
                let rm = ctx.risk(&SimplexWeights::new(mid).unwrap()).unwrap();
                assert!(
                    rm <= lam * r1 + (1.0 - lam) * r2 + 1e-9,
                    "convexity violated: {rm} vs chord"
                );
            }
        }
    }

    #[test]
    fn risk_is_lipschitz_on_random_instances() {
        let mut rng = derived_rng(37, "risk-lipschitz", 0);
        let comps = gaussians(&[(0.0, 1.0), (2.0, 1.0), (4.0, 1.5), (6.0, 0.7)]);
        let ys: Vec<f64> = (0..30).map(|_| rng.gen_range(-2.0..8.0)).collect();
        let ctx = RiskContext::iid(comps, ys, ScoreBackend::ClosedFormNormalMixture).unwrap();
        // Calibrate an empirical Lipschitz constant, then check fresh pairs.
        let draw_w = |rng: &mut rand_chacha::ChaCha12Rng| {
            SimplexWeights::normalized((0..4).map(|_| rng.gen_range(0.01..1.0)).collect())
                .unwrap()
        };
        let mut lips: f64 = 0.0;
        let mut pairs = Vec::new();
        for _ in 0..250 {
            let a = draw_w(&mut rng);
            let b = draw_w(&mut rng);
            let dist = a
                .as_slice()
                .iter()
                .zip(b.as_slice())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            if dist < 1e-9 {
                continue;
            }
            let ratio = (ctx.risk(&a).unwrap() - ctx.risk(&b).unwrap()).abs() / dist;
            pairs.push(ratio);
            lips = lips.max(ratio);
        }
        assert!(lips.is_finite() && lips > 0.0);
        for r in pairs {
            assert!(r <= lips + 1e-12);
        }
    }

    #[test]
    fn subset_restricts_the_mean() {
        let comps = gaussians(&[(0.0, 1.0), (2.0, 1.0)]);
        let ys = vec![0.1, 1.1, 2.1, 3.1];
        let ctx =
            RiskContext::iid(comps.clone(), ys.clone(), ScoreBackend::ClosedFormNormalMixture)
                .unwrap();
        let sub = ctx.subset(&[1, 3]).unwrap();
        let direct = RiskContext::iid(
            comps,
            vec![ys[1], ys[3]],
            ScoreBackend::ClosedFormNormalMixture,
        )
        .unwrap();
        let w = SimplexWeights::uniform(2).unwrap();
        assert_abs_diff_eq!(
            sub.risk(&w).unwrap(),
            direct.risk(&w).unwrap(),
            epsilon = 1e-13
        );
    }
}
