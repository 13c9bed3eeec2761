//! Study 1: i.i.d. draws from a two-normal mixture scored by six fixed
//! unit-variance candidates, across a ladder of training sample sizes.
//! Each fitted ensemble is evaluated on fresh draws from the truth.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{Method, Metric, SamplerSettings, ScoreRow, StudyReport, CANDIDATE_MEANS};
use crate::baselines::{avs_weights, bma_weights, eqw_weights, ModelEvidencePanel};
use crate::calibration::{uwd1, PitSeries};
use crate::dist::{ComponentForecast, LinearPool, SimplexWeights};
use crate::error::Result;
use crate::math::{derived_rng, normal_pdf};
use crate::risk::{RiskContext, ScoreBackend};
use crate::scoring::{crps_normal, crps_normal_mixture, log_score};
use crate::sgp::{posterior_mean_weights, sample_posterior, GibbsConfig};

#[derive(Clone, Debug)]
pub struct IidStudyConfig {
    /// Mixture weight of the first truth component.
    pub nu: f64,
    pub comp_means: (f64, f64),
    pub comp_sds: (f64, f64),
    pub candidate_means: Vec<f64>,
    pub candidate_sd: f64,
    pub sample_sizes: Vec<usize>,
    pub replicates: usize,
    /// Fresh truth draws used to evaluate each fitted ensemble.
    pub eval_draws: usize,
    pub seed: u64,
}

impl Default for IidStudyConfig {
    fn default() -> Self {
        Self {
            nu: 0.65,
            comp_means: (3.0, 6.5),
            comp_sds: (1.0, 1.0),
            candidate_means: CANDIDATE_MEANS.to_vec(),
            candidate_sd: 1.0,
            sample_sizes: vec![10, 20, 50, 100, 200],
            replicates: 50,
            eval_draws: 1_000,
            seed: 0,
        }
    }
}

impl IidStudyConfig {
    fn validate(&self) -> Result<()> {
        if !(self.nu >= 0.0 && self.nu <= 1.0) {
            return Err(crate::Error::invalid("nu must lie in [0,1]"));
        }
        if self.comp_sds.0 <= 0.0 || self.comp_sds.1 <= 0.0 || self.candidate_sd <= 0.0 {
            return Err(crate::Error::invalid("standard deviations must be positive"));
        }
        if self.replicates == 0 || self.sample_sizes.is_empty() || self.eval_draws == 0 {
            return Err(crate::Error::invalid(
                "replicates, sample_sizes, eval_draws must be nonempty/positive",
            ));
        }
        Ok(())
    }

    /// Default SGP learning rate for this study.
    pub fn default_eta(&self) -> f64 {
        15.0
    }
}

/// I.i.d. draws from `ν·N(m₁,s₁²) + (1−ν)·N(m₂,s₂²)`.
pub fn gen_iid_mixture<R: Rng + ?Sized>(cfg: &IidStudyConfig, n: usize, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let (mu, sd) = if rng.gen::<f64>() < cfg.nu {
                (cfg.comp_means.0, cfg.comp_sds.0)
            } else {
                (cfg.comp_means.1, cfg.comp_sds.1)
            };
            mu + sd * rng.sample::<f64, _>(StandardNormal)
        })
        .collect()
}

pub(super) fn run(
    cfg: &IidStudyConfig,
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
    cfg: &IidStudyConfig,
    methods: &[Method],
    sampler: &SamplerSettings,
    eta: f64,
    replicate: usize,
) -> Result<Vec<ScoreRow>> {
    let c = cfg.candidate_means.len();
    let mus = &cfg.candidate_means;
    let sigmas = vec![cfg.candidate_sd; c];
    let candidates: Vec<ComponentForecast> = mus
        .iter()
        .map(|&m| ComponentForecast::gaussian(m, cfg.candidate_sd))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (ni, &n) in cfg.sample_sizes.iter().enumerate() {
        let stream = (replicate as u64) << 16 | ni as u64;
        let mut train_rng = derived_rng(cfg.seed, "iid-train", stream);
        let y_train = gen_iid_mixture(cfg, n, &mut train_rng);
        let mut eval_rng = derived_rng(cfg.seed, "iid-eval", stream);
        let y_eval = gen_iid_mixture(cfg, cfg.eval_draws, &mut eval_rng);

        let ctx = RiskContext::iid(
            candidates.clone(),
            y_train.clone(),
            ScoreBackend::ClosedFormNormalMixture,
        )?;
        let panel = evidence_panel(mus, cfg.candidate_sd, &y_train)?;

        for &method in methods {
            let w = match method {
                Method::Eqw => eqw_weights(c)?,
                Method::Bma => bma_weights(&panel)?,
                Method::Avs => avs_weights(&panel, sampler.avs_eta)?,
                Method::Sgp | Method::Sgp50 => {
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
                        seed: crate::math::derive_seed(cfg.seed, "iid-fit", stream),
                        step_scale: sampler.step_scale,
                    };
                    posterior_mean_weights(&sample_posterior(&ctx, &gibbs)?)?
                }
            };
            let (crps, logs, uwd) = evaluate_pool(mus, &sigmas, &candidates, &w, &y_eval)?;
            for (metric, value) in [(Metric::Crps, crps), (Metric::Logs, logs), (Metric::Uwd1, uwd)]
            {
                rows.push(ScoreRow {
                    study: "iid".into(),
                    method,
                    replicate,
                    t: n,
                    metric,
                    value,
                });
            }
        }
    }
    Ok(rows)
}

/// Per-observation log densities and CRPS of each candidate, feeding the
/// BMA/AVS panel (no discounting in the i.i.d. study).
fn evidence_panel(mus: &[f64], sd: f64, ys: &[f64]) -> Result<ModelEvidencePanel> {
    let loglik: Vec<Vec<f64>> = ys
        .iter()
        .map(|&y| {
            mus.iter()
                .map(|&m| (normal_pdf((y - m) / sd) / sd).max(f64::MIN_POSITIVE).ln())
                .collect()
        })
        .collect();
    let score: Vec<Vec<f64>> = ys
        .iter()
        .map(|&y| {
            mus.iter()
                .map(|&m| crps_normal(m, sd, y))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    ModelEvidencePanel::new(loglik, score, SimplexWeights::uniform(mus.len())?, 1.0)
}

/// Mean CRPS, mean (capped) LogS, and UWD1 of the weighted pool over the
/// evaluation draws.
fn evaluate_pool(
    mus: &[f64],
    sigmas: &[f64],
    candidates: &[ComponentForecast],
    w: &SimplexWeights,
    y_eval: &[f64],
) -> Result<(f64, f64, f64)> {
    let pool = LinearPool::new(candidates.to_vec(), w.clone())?;
    let mut crps_total = 0.0;
    let mut logs_total = 0.0;
    let mut pits = Vec::with_capacity(y_eval.len());
    for &y in y_eval {
        crps_total += crps_normal_mixture(mus, sigmas, w, y)?;
        logs_total += log_score(pool.pdf(y))?;
        pits.push(pool.cdf(y));
    }
    let n = y_eval.len() as f64;
    let uwd = uwd1(&PitSeries::new(pits)?);
    Ok((crps_total / n, logs_total / n, uwd))
}
