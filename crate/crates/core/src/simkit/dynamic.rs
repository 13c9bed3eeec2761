//! Study 2: the truth mixture's weights follow a softmax random walk, and
//! every method refits its ensemble each week to forecast one step ahead
//! with the discounted dynamic risk.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{Method, Metric, SamplerSettings, ScoreRow, StudyReport, CANDIDATE_MEANS};
use crate::baselines::{avs_weights, bma_weights, eqw_weights, ModelEvidencePanel};
use crate::calibration::{uwd1, PitSeries};
use crate::dist::SimplexWeights;
use crate::error::Result;
use crate::math::{derived_rng, folded_normal_mean, normal_cdf, normal_pdf};
use crate::risk::{RiskContext, RiskMode, DEFAULT_DISCOUNT};
use crate::scoring::{crps_normal, log_score, MixtureCrpsTerms};
use crate::sgp::{posterior_mean_weights, sample_posterior, GibbsConfig};

#[derive(Clone, Debug)]
pub struct DynamicStudyConfig {
    /// Number of time steps simulated per replicate.
    pub t_len: usize,
    /// Step variance of the latent random walk.
    pub sigma2: f64,
    /// Initial truth weights (mapped through the identity softmax).
    pub w_init: (f64, f64),
    /// Discount used by all dynamic fits.
    pub discount: f64,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for DynamicStudyConfig {
    fn default() -> Self {
        Self {
            t_len: 50,
            sigma2: 0.01,
            w_init: (0.65, 0.35),
            discount: DEFAULT_DISCOUNT,
            replicates: 50,
            seed: 0,
        }
    }
}

impl DynamicStudyConfig {
    fn validate(&self) -> Result<()> {
        if self.t_len < 2 {
            return Err(crate::Error::invalid("t_len must be at least 2"));
        }
        if self.sigma2 < 0.0 {
            return Err(crate::Error::invalid("sigma2 must be nonnegative"));
        }
        if !(self.w_init.0 > 0.0 && self.w_init.1 > 0.0) {
            return Err(crate::Error::invalid("initial weights must be positive"));
        }
        if self.replicates == 0 {
            return Err(crate::Error::invalid("replicates must be positive"));
        }
        Ok(())
    }

    pub fn default_eta(&self) -> f64 {
        15.0
    }
}

/// Truth components of the dynamic generator: the data mix `N(3,1)` and
/// `N(6.5,1)` with random-walk weights.
const TRUTH_MEANS: (f64, f64) = (3.0, 6.5);

/// Simulates the dynamic mixture: latent `z_t` random walk with step
/// variance `σ²I`, weights `ω_t = softmax(z_t)` started at exactly
/// `w_init`, one observation per time. Returns `(y, ω)` with one weight
/// row per time step.
pub fn gen_dynamic_mixture<R: Rng + ?Sized>(
    cfg: &DynamicStudyConfig,
    rng: &mut R,
) -> (Vec<f64>, Vec<[f64; 2]>) {
    let sigma = cfg.sigma2.sqrt();
    let mut z = [cfg.w_init.0.ln(), cfg.w_init.1.ln()];
    let mut ys = Vec::with_capacity(cfg.t_len);
    let mut ws = Vec::with_capacity(cfg.t_len);
    let init_sum = cfg.w_init.0 + cfg.w_init.1;
    for t in 0..cfg.t_len {
        let w = if t == 0 {
            // The softmax of (ln w₁, ln w₂) is w itself; emit it without
            // the exp/ln round-trip so the first row is exact.
            [cfg.w_init.0 / init_sum, cfg.w_init.1 / init_sum]
        } else {
            z[0] += sigma * rng.sample::<f64, _>(StandardNormal);
            z[1] += sigma * rng.sample::<f64, _>(StandardNormal);
            let m = z[0].max(z[1]);
            let e = [(z[0] - m).exp(), (z[1] - m).exp()];
            let sum = e[0] + e[1];
            [e[0] / sum, e[1] / sum]
        };
        let mu = if rng.gen::<f64>() < w[0] {
            TRUTH_MEANS.0
        } else {
            TRUTH_MEANS.1
        };
        ys.push(mu + rng.sample::<f64, _>(StandardNormal));
        ws.push(w);
    }
    (ys, ws)
}

pub(super) fn run(
    cfg: &DynamicStudyConfig,
    methods: &[Method],
    sampler: &SamplerSettings,
) -> Result<StudyReport> {
    cfg.validate()?;
    let eta = sampler.sgp_eta.unwrap_or_else(|| cfg.default_eta());
    let per_replicate: Vec<Result<Vec<ScoreRow>>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| run_replicate(cfg, methods, sampler, eta, r))
        .collect();
    let mut rows = Vec::new();
    for res in per_replicate {
        rows.extend(res?);
    }
    Ok(StudyReport { rows })
}

fn run_replicate(
    cfg: &DynamicStudyConfig,
    methods: &[Method],
    sampler: &SamplerSettings,
    eta: f64,
    replicate: usize,
) -> Result<Vec<ScoreRow>> {
    let mus: Vec<f64> = CANDIDATE_MEANS.to_vec();
    let c = mus.len();
    let mut gen_rng = derived_rng(cfg.seed, "dyn-gen", replicate as u64);
    let (ys, _) = gen_dynamic_mixture(cfg, &mut gen_rng);

    // Candidates are fixed in time, so the cross terms are one matrix.
    let terms = MixtureCrpsTerms::from_normals(&mus, &vec![1.0; c])?;
    // Cached per-time evidence, filled as observations arrive.
    let mut obs_linear: Vec<Vec<f64>> = Vec::new();
    let mut loglik: Vec<Vec<f64>> = Vec::new();
    let mut crps_cols: Vec<Vec<f64>> = Vec::new();

    let mut rows = Vec::new();
    let mut pits: std::collections::BTreeMap<Method, Vec<f64>> = Default::default();
    for t in 0..cfg.t_len {
        let y = ys[t];
        if t > 0 {
            // Forecast y_t from data up to t−1.
            for &method in methods {
                let w = match method {
                    Method::Eqw => eqw_weights(c)?,
                    Method::Bma | Method::Avs => {
                        let panel = ModelEvidencePanel::new(
                            loglik.clone(),
                            crps_cols.clone(),
                            SimplexWeights::uniform(c)?,
                            cfg.discount,
                        )?;
                        if method == Method::Bma {
                            bma_weights(&panel)?
                        } else {
                            avs_weights(&panel, sampler.avs_eta)?
                        }
                    }
                    Method::Sgp | Method::Sgp50 => {
                        let ctx = RiskContext::from_parts(
                            RiskMode::Dynamic,
                            cfg.discount,
                            ys[..t].to_vec(),
                            vec![terms.clone()],
                            obs_linear.clone(),
                            vec![0; t],
                        )?;
                        let alpha = if method == Method::Sgp50 {
                            vec![50.0; c]
                        } else {
                            vec![1.0; c]
                        };
                        let gibbs = GibbsConfig {
                            eta,
                            dirichlet_alpha: alpha,
                            chains: sampler.chains,
                            draws_per_chain: sampler.draws_per_chain,
                            burn_in: sampler.burn_in,
                            seed: crate::math::derive_seed(
                                cfg.seed,
                                "dyn-fit",
                                ((replicate as u64) << 16) | t as u64,
                            ),
                            step_scale: sampler.step_scale,
                        };
                        posterior_mean_weights(&sample_posterior(&ctx, &gibbs)?)?
                    }
                };
                let lin: Vec<f64> = mus.iter().map(|&m| folded_normal_mean(y - m, 1.0)).collect();
                let crps = terms.crps(&lin, &w)?;
                let pdf: f64 = mus
                    .iter()
                    .zip(w.as_slice())
                    .map(|(&m, &wc)| wc * normal_pdf(y - m))
                    .sum();
                let logs = log_score(pdf)?;
                let pit: f64 = mus
                    .iter()
                    .zip(w.as_slice())
                    .map(|(&m, &wc)| wc * normal_cdf(y - m))
                    .sum::<f64>()
                    .clamp(0.0, 1.0);
                pits.entry(method).or_default().push(pit);
                for (metric, value) in
                    [(Metric::Crps, crps), (Metric::Logs, logs), (Metric::Pit, pit)]
                {
                    rows.push(ScoreRow {
                        study: "dynamic".into(),
                        method,
                        replicate,
                        t: t + 1,
                        metric,
                        value,
                    });
                }
            }
        }
        // Reveal y_t to future fits.
        obs_linear.push(mus.iter().map(|&m| folded_normal_mean(y - m, 1.0)).collect());
        loglik.push(mus.iter().map(|&m| normal_pdf(y - m).max(f64::MIN_POSITIVE).ln()).collect());
        crps_cols.push(
            mus.iter()
                .map(|&m| crps_normal(m, 1.0, y))
                .collect::<Result<_>>()?,
        );
    }
    for (&method, series) in &pits {
        rows.push(ScoreRow {
            study: "dynamic".into(),
            method,
            replicate,
            t: 0,
            metric: Metric::Uwd1,
            value: uwd1(&PitSeries::new(series.clone())?),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_walk_keeps_initial_weights() {
        let cfg = DynamicStudyConfig {
            sigma2: 0.0,
            ..Default::default()
        };
        let (_, ws) = gen_dynamic_mixture(&cfg, &mut derived_rng(1, "d", 0));
        for w in ws {
            assert!((w[0] - 0.65).abs() < 1e-12);
            assert!((w[1] - 0.35).abs() < 1e-12);
        }
    }

    #[test]
    fn weight_rows_stay_on_the_simplex() {
        let cfg = DynamicStudyConfig::default();
        let (_, ws) = gen_dynamic_mixture(&cfg, &mut derived_rng(2, "d", 1));
        for w in ws {
            assert!(w[0] >= 0.0 && w[1] >= 0.0);
            assert!((w[0] + w[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn first_row_is_exactly_the_initial_weights() {
        let cfg = DynamicStudyConfig::default();
        let (_, ws) = gen_dynamic_mixture(&cfg, &mut derived_rng(3, "d", 2));
        assert_eq!(ws[0], [0.65, 0.35]);
    }

    #[test]
    fn replicate_scores_forecast_times_two_to_t() {
        let cfg = DynamicStudyConfig {
            t_len: 6,
            replicates: 1,
            seed: 4,
            ..Default::default()
        };
        let sampler = SamplerSettings {
            draws_per_chain: 300,
            burn_in: 60,
            ..Default::default()
        };
        let report = run(&cfg, &[Method::Eqw, Method::Bma], &sampler).unwrap();
        let ts: std::collections::BTreeSet<usize> = report
            .rows
            .iter()
            .filter(|r| r.metric == Metric::Crps)
            .map(|r| r.t)
            .collect();
        assert_eq!(ts, (2..=6).collect());
        // One UWD1 row per method.
        assert_eq!(
            report.rows.iter().filter(|r| r.metric == Metric::Uwd1).count(),
            2
        );
    }
}
