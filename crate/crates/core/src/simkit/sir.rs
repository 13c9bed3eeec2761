//! Study 3: weekly infection counts from a stochastic SIR model,
//! forecast one week ahead by four simple component models, combined by
//! each weighting method with the discounted dynamic risk.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use super::{Method, Metric, SamplerSettings, ScoreRow, StudyReport};
use crate::baselines::{avs_weights, bma_weights, eqw_weights, ModelEvidencePanel};
use crate::calibration::{uwd1, PitSeries};
use crate::dist::{ComponentForecast, SimplexWeights};
use crate::error::{Error, Result};
use crate::math::{derive_seed, derived_rng, mean, variance};
use crate::risk::{RiskContext, RiskMode, DEFAULT_DISCOUNT};
use crate::scoring::{log_score, mean_abs_to_obs, MixtureCrpsTerms};
use crate::sgp::{posterior_mean_weights, sample_posterior, GibbsConfig};

#[derive(Clone, Debug)]
pub struct SirStudyConfig {
    pub population: u64,
    /// Transmission rate per week.
    pub beta: f64,
    /// Recovery rate per week.
    pub gamma: f64,
    pub initial_infected: u64,
    pub weeks: usize,
    /// First week with enough history to fit components; forecasts start
    /// at the following week.
    pub fit_start_week: usize,
    pub replicates: usize,
    pub discount: f64,
    /// Predictive draws per component forecast.
    pub component_draws: usize,
    pub seed: u64,
    /// Event-by-event simulation instead of tau-leaping.
    pub exact_gillespie: bool,
}

impl Default for SirStudyConfig {
    fn default() -> Self {
        Self {
            population: 10_000,
            beta: 0.4,
            gamma: 0.2,
            initial_infected: 100,
            weeks: 35,
            fit_start_week: 5,
            replicates: 200,
            discount: DEFAULT_DISCOUNT,
            component_draws: 10_000,
            seed: 0,
            exact_gillespie: false,
        }
    }
}

impl SirStudyConfig {
    fn validate(&self) -> Result<()> {
        if self.population == 0 || self.initial_infected == 0 {
            return Err(Error::invalid("population and initial_infected must be positive"));
        }
        if self.initial_infected > self.population {
            return Err(Error::invalid("initial_infected exceeds population"));
        }
        if !(self.beta >= 0.0 && self.gamma >= 0.0) {
            return Err(Error::invalid("rates must be nonnegative"));
        }
        if self.fit_start_week < 4 || self.fit_start_week >= self.weeks {
            return Err(Error::invalid(
                "fit_start_week must be at least 4 and below weeks",
            ));
        }
        if self.replicates == 0 || self.component_draws < 2 {
            return Err(Error::invalid("replicates and component_draws must be positive"));
        }
        Ok(())
    }

    pub fn default_eta(&self) -> f64 {
        1.0
    }
}

/// Tau-leap step size in weeks.
const TAU_DT: f64 = 0.01;

fn poisson_draw<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("lambda positive").sample(rng) as u64
}

/// Weekly infected-compartment counts from a stochastic SIR run
/// (tau-leaped by default, exact Gillespie behind the config flag).
/// Returns one count per week boundary, `weeks` entries.
pub fn gen_sir<R: Rng + ?Sized>(cfg: &SirStudyConfig, rng: &mut R) -> Vec<u64> {
    if cfg.exact_gillespie {
        gen_sir_gillespie(cfg, rng)
    } else {
        gen_sir_tau_leap(cfg, rng)
    }
}

fn gen_sir_tau_leap<R: Rng + ?Sized>(cfg: &SirStudyConfig, rng: &mut R) -> Vec<u64> {
    let n = cfg.population;
    let mut s = n - cfg.initial_infected;
    let mut i = cfg.initial_infected;
    let mut r = 0u64;
    let steps_per_week = (1.0 / TAU_DT).round() as usize;
    let mut out = Vec::with_capacity(cfg.weeks);
    for _ in 0..cfg.weeks {
        for _ in 0..steps_per_week {
            let infection_rate = cfg.beta * s as f64 * i as f64 / n as f64;
            let recovery_rate = cfg.gamma * i as f64;
            let new_inf = poisson_draw(rng, infection_rate * TAU_DT).min(s);
            let new_rec = poisson_draw(rng, recovery_rate * TAU_DT).min(i);
            s -= new_inf;
            i = i + new_inf - new_rec;
            r += new_rec;
            debug_assert_eq!(s + i + r, n);
        }
        out.push(i);
    }
    out
}

fn gen_sir_gillespie<R: Rng + ?Sized>(cfg: &SirStudyConfig, rng: &mut R) -> Vec<u64> {
    let n = cfg.population;
    let mut s = n - cfg.initial_infected;
    let mut i = cfg.initial_infected;
    let mut r = 0u64;
    let mut t = 0.0f64;
    let mut out = Vec::with_capacity(cfg.weeks);
    while out.len() < cfg.weeks {
        let infection_rate = cfg.beta * s as f64 * i as f64 / n as f64;
        let recovery_rate = cfg.gamma * i as f64;
        let total = infection_rate + recovery_rate;
        if total <= 0.0 {
            while out.len() < cfg.weeks {
                out.push(i);
            }
            break;
        }
        let u: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
        t -= u.ln() / total;
        while out.len() < cfg.weeks && (out.len() + 1) as f64 <= t {
            out.push(i);
        }
        if rng.gen::<f64>() * total < infection_rate {
            s -= 1;
            i += 1;
        } else {
            i -= 1;
            r += 1;
        }
        debug_assert_eq!(s + i + r, n);
    }
    out
}

/// Deterministic SIR trajectory (RK4): infected counts at week
/// boundaries 1..=weeks, starting from the week-1 state.
fn simulate_sir_ode(beta: f64, gamma: f64, s0: f64, i0: f64, n: f64, weeks: usize) -> Vec<f64> {
    let dt = 0.2;
    let steps_per_week = 5;
    let mut s = s0;
    let mut i = i0;
    let deriv = |s: f64, i: f64| -> (f64, f64) {
        let inf = beta * s * i / n;
        (-inf, inf - gamma * i)
    };
    let mut out = Vec::with_capacity(weeks);
    out.push(i0);
    for _ in 1..weeks {
        for _ in 0..steps_per_week {
            let (k1s, k1i) = deriv(s, i);
            let (k2s, k2i) = deriv(s + 0.5 * dt * k1s, i + 0.5 * dt * k1i);
            let (k3s, k3i) = deriv(s + 0.5 * dt * k2s, i + 0.5 * dt * k2i);
            let (k4s, k4i) = deriv(s + dt * k3s, i + dt * k3i);
            s += dt / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s);
            i += dt / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i);
            s = s.max(0.0);
            i = i.max(0.0);
        }
        out.push(i);
    }
    out
}

/// Least-squares SIR fit over a (β, γ) grid, one-week-ahead Gaussian
/// forecast around the fitted trajectory's next value.
fn ode_forecast<R: Rng + ?Sized>(
    history: &[u64],
    population: u64,
    draws: usize,
    rng: &mut R,
) -> Result<ComponentForecast> {
    let t = history.len();
    let n = population as f64;
    let i0 = (history[0] as f64).max(1.0);
    let s0 = n - i0;
    let mut best = (0.3, 0.2, f64::INFINITY);
    for bi in 0..12 {
        let beta = 0.05 + 1.45 * bi as f64 / 11.0;
        for gi in 0..10 {
            let gamma = 0.02 + 0.98 * gi as f64 / 9.0;
            let traj = simulate_sir_ode(beta, gamma, s0, i0, n, t + 1);
            let sse: f64 = history
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &obs)| {
                    let d = traj[k] - obs as f64;
                    d * d
                })
                .sum();
            if sse < best.2 {
                best = (beta, gamma, sse);
            }
        }
    }
    let (beta, gamma, sse) = best;
    let traj = simulate_sir_ode(beta, gamma, s0, i0, n, t + 1);
    let pred = traj[t];
    let dof = (t.saturating_sub(3)).max(1) as f64;
    let sd = (sse / dof).sqrt().max(1.0);
    let samples: Vec<f64> = (0..draws)
        .map(|_| (pred + sd * rng.sample::<f64, _>(StandardNormal)).max(0.0))
        .collect();
    ComponentForecast::empirical(samples)
}

/// AR(1) on log(count+1), one step ahead.
fn ar1_forecast<R: Rng + ?Sized>(
    history: &[u64],
    draws: usize,
    rng: &mut R,
) -> Result<ComponentForecast> {
    let xs: Vec<f64> = history.iter().map(|&c| (c as f64 + 1.0).ln()).collect();
    let t = xs.len();
    let x_now = xs[t - 1];
    let lag: Vec<f64> = xs[..t - 1].to_vec();
    let lead: Vec<f64> = xs[1..].to_vec();
    let var_lag = variance(&lag);
    let (pred, sd) = if var_lag < 1e-12 {
        (x_now, 0.0)
    } else {
        let m_lag = mean(&lag);
        let m_lead = mean(&lead);
        let cov: f64 = lag
            .iter()
            .zip(&lead)
            .map(|(a, b)| (a - m_lag) * (b - m_lead))
            .sum::<f64>()
            / (lag.len() - 1) as f64;
        let slope = cov / var_lag;
        let intercept = m_lead - slope * m_lag;
        let resid_ss: f64 = lag
            .iter()
            .zip(&lead)
            .map(|(a, b)| {
                let e = b - (intercept + slope * a);
                e * e
            })
            .sum();
        let dof = (lag.len().saturating_sub(2)).max(1) as f64;
        (intercept + slope * x_now, (resid_ss / dof).sqrt())
    };
    log_scale_samples(pred, sd, draws, rng)
}

/// Random walk with drift on log(count+1).
fn rw_drift_forecast<R: Rng + ?Sized>(
    history: &[u64],
    draws: usize,
    rng: &mut R,
) -> Result<ComponentForecast> {
    let xs: Vec<f64> = history.iter().map(|&c| (c as f64 + 1.0).ln()).collect();
    let diffs: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let drift = mean(&diffs);
    let sd = variance(&diffs).sqrt();
    log_scale_samples(xs[xs.len() - 1] + drift, sd, draws, rng)
}

/// Gaussian around the historical mean on the raw scale.
fn mean_forecast<R: Rng + ?Sized>(
    history: &[u64],
    draws: usize,
    rng: &mut R,
) -> Result<ComponentForecast> {
    let raw: Vec<f64> = history.iter().map(|&c| c as f64).collect();
    let m = mean(&raw);
    let sd = variance(&raw).sqrt();
    let samples: Vec<f64> = (0..draws)
        .map(|_| (m + sd * rng.sample::<f64, _>(StandardNormal)).max(0.0))
        .collect();
    ComponentForecast::empirical(samples)
}

fn log_scale_samples<R: Rng + ?Sized>(
    pred: f64,
    sd: f64,
    draws: usize,
    rng: &mut R,
) -> Result<ComponentForecast> {
    let samples: Vec<f64> = (0..draws)
        .map(|_| {
            let x = pred + sd * rng.sample::<f64, _>(StandardNormal);
            (x.exp() - 1.0).max(0.0)
        })
        .collect();
    ComponentForecast::empirical(samples)
}

/// Fits the four one-week-ahead component forecasts on the observed
/// counts: SIR ODE least squares, AR(1) on logs, random walk with drift
/// on logs, and the historical-mean model. Each returns `draws` empirical
/// samples clamped at zero.
pub fn fit_sir_components<R: Rng + ?Sized>(
    history: &[u64],
    population: u64,
    draws: usize,
    rng: &mut R,
) -> Result<Vec<ComponentForecast>> {
    if history.len() < 4 {
        return Err(Error::invalid(format!(
            "need at least 4 observed weeks, got {}",
            history.len()
        )));
    }
    Ok(vec![
        ode_forecast(history, population, draws, rng)?,
        ar1_forecast(history, draws, rng)?,
        rw_drift_forecast(history, draws, rng)?,
        mean_forecast(history, draws, rng)?,
    ])
}

pub(super) fn run(
    cfg: &SirStudyConfig,
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
    cfg: &SirStudyConfig,
    methods: &[Method],
    sampler: &SamplerSettings,
    eta: f64,
    replicate: usize,
) -> Result<Vec<ScoreRow>> {
    const C: usize = 4;
    let mut gen_rng = derived_rng(cfg.seed, "sir-gen", replicate as u64);
    let counts = gen_sir(cfg, &mut gen_rng);

    let mut rows = Vec::new();
    let mut pits: std::collections::BTreeMap<Method, Vec<f64>> = Default::default();
    // Cached evidence from already-scored steps.
    let mut past_obs: Vec<f64> = Vec::new();
    let mut past_terms: Vec<MixtureCrpsTerms> = Vec::new();
    let mut past_linear: Vec<Vec<f64>> = Vec::new();
    let mut past_loglik: Vec<Vec<f64>> = Vec::new();
    let mut past_crps: Vec<Vec<f64>> = Vec::new();

    for t in cfg.fit_start_week..cfg.weeks {
        let stream = ((replicate as u64) << 16) | t as u64;
        let mut fit_rng = derived_rng(cfg.seed, "sir-fit", stream);
        let comps = fit_sir_components(
            &counts[..t],
            cfg.population,
            cfg.component_draws,
            &mut fit_rng,
        )?;
        let y = counts[t] as f64;
        let samples: Vec<Vec<f64>> = comps
            .iter()
            .map(|c| c.samples().expect("components are empirical").to_vec())
            .collect();
        let mut terms_rng = derived_rng(cfg.seed, "sir-terms", stream);
        let terms = MixtureCrpsTerms::from_samples(&samples, &mut terms_rng)?;
        let abs_obs: Vec<f64> = samples.iter().map(|s| mean_abs_to_obs(s, y)).collect();
        let pdf_at_y: Vec<f64> = comps.iter().map(|c| c.pdf(y)).collect();
        let cdf_at_y: Vec<f64> = comps.iter().map(|c| c.cdf(y)).collect();

        for &method in methods {
            let w = if past_obs.is_empty() || method == Method::Eqw {
                eqw_weights(C)?
            } else {
                match method {
                    Method::Eqw => unreachable!(),
                    Method::Bma | Method::Avs => {
                        let panel = ModelEvidencePanel::new(
                            past_loglik.clone(),
                            past_crps.clone(),
                            SimplexWeights::uniform(C)?,
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
                            past_obs.clone(),
                            past_terms.clone(),
                            past_linear.clone(),
                            (0..past_obs.len()).collect(),
                        )?;
                        let alpha = if method == Method::Sgp50 {
                            vec![50.0; C]
                        } else {
                            vec![1.0; C]
                        };
                        let gibbs = GibbsConfig {
                            eta,
                            dirichlet_alpha: alpha,
                            chains: sampler.chains,
                            draws_per_chain: sampler.draws_per_chain,
                            burn_in: sampler.burn_in,
                            seed: derive_seed(cfg.seed, "sir-sgp", stream),
                            step_scale: sampler.step_scale,
                        };
                        posterior_mean_weights(&sample_posterior(&ctx, &gibbs)?)?
                    }
                }
            };
            let crps = terms.crps(&abs_obs, &w)?;
            let pool_pdf: f64 = pdf_at_y.iter().zip(w.as_slice()).map(|(p, &wc)| wc * p).sum();
            let logs = log_score(pool_pdf)?;
            let pit: f64 = cdf_at_y
                .iter()
                .zip(w.as_slice())
                .map(|(p, &wc)| wc * p)
                .sum::<f64>()
                .clamp(0.0, 1.0);
            pits.entry(method).or_default().push(pit);
            for (metric, value) in [(Metric::Crps, crps), (Metric::Logs, logs), (Metric::Pit, pit)]
            {
                rows.push(ScoreRow {
                    study: "sir".into(),
                    method,
                    replicate,
                    t: t + 1,
                    metric,
                    value,
                });
            }
        }

        let comp_crps: Vec<f64> = (0..C)
            .map(|c| abs_obs[c] - 0.5 * terms.cross_abs(c, c))
            .collect();
        let comp_loglik: Vec<f64> = pdf_at_y
            .iter()
            .map(|&d| if d > 0.0 { d.ln() } else { f64::NEG_INFINITY })
            .collect();
        past_obs.push(y);
        past_terms.push(terms);
        past_linear.push(abs_obs);
        past_loglik.push(comp_loglik);
        past_crps.push(comp_crps);
    }
    for (&method, series) in &pits {
        rows.push(ScoreRow {
            study: "sir".into(),
            method,
            replicate,
            t: 0,
            metric: Metric::Uwd1,
            value: uwd1(&PitSeries::new(series.clone())?),
        });
    }
    Ok(rows)
}
