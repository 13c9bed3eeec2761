//! Hub-format quantile submissions: CSV ingestion with validation,
//! completeness filtering, and the weekly dynamic-ensemble pipeline.
//!
//! Forecast CSVs carry columns `team, location, reference_date, horizon,
//! output_type_id, value` (one row per quantile level); truth CSVs carry
//! `location, date, value`. A forecast submitted at `reference_date` with
//! horizon `h` targets the date `h` weeks later.
//!
//! The pipeline reconstructs each team's distribution from its quantiles
//! on the log(value+1) scale, refits every method's weights each week
//! from the previous weeks' scores (discounted), scores the pooled
//! forecast with Monte-Carlo CRPS on the log scale, and additionally
//! scores a per-quantile weighted-average ensemble with WIS on the raw
//! scale. Week one has no history, so every method uses equal weights.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{avs_weights, bma_weights, eqw_weights, ModelEvidencePanel};
use crate::dist::{ComponentForecast, SimplexWeights};
use crate::error::{Error, Result};
use crate::math::{derive_seed, derived_rng};
use crate::risk::{RiskContext, RiskMode};
use crate::scoring::{
    mean_abs_to_obs, weighted_interval_score, MixtureCrpsTerms, QuantileForecast,
};
use crate::sgp::{posterior_mean_weights, sample_posterior, GibbsConfig};
use crate::simkit::Method;

/// The 23 probability levels of the hub quantile format.
pub const FLUSIGHT_PROBS: [f64; 23] = [
    0.01, 0.025, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50, 0.55, 0.60, 0.65,
    0.70, 0.75, 0.80, 0.85, 0.90, 0.95, 0.975, 0.99,
];

const PROB_TOL: f64 = 1e-9;

/// One quantile row of a hub submission.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HubRecord {
    pub team: String,
    pub location: String,
    /// ISO date (YYYY-MM-DD) of the submission week.
    pub reference_date: String,
    pub horizon: u8,
    /// The quantile's probability level.
    #[serde(rename = "output_type_id")]
    pub prob: f64,
    pub value: f64,
}

/// Observed count for one location-week.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub location: String,
    /// ISO date (YYYY-MM-DD).
    pub date: String,
    pub value: u64,
}

fn parse_iso_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

/// Reads and validates a hub forecast CSV against the default 23-level
/// probability set.
pub fn parse_hub_csv(path: impl AsRef<Path>) -> Result<Vec<HubRecord>> {
    let file = std::fs::File::open(path)?;
    parse_hub_reader(file, &FLUSIGHT_PROBS)
}

/// As [`parse_hub_csv`] with a caller-supplied probability set.
pub fn parse_hub_reader(reader: impl Read, expected_probs: &[f64]) -> Result<Vec<HubRecord>> {
    let mut csv = csv::Reader::from_reader(reader);
    {
        let headers = csv.headers()?;
        for col in [
            "team",
            "location",
            "reference_date",
            "horizon",
            "output_type_id",
            "value",
        ] {
            if !headers.iter().any(|h| h == col) {
                return Err(Error::Parse {
                    row: 1,
                    message: format!("missing column `{col}`"),
                });
            }
        }
    }
    let mut records = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in csv.deserialize::<HubRecord>().enumerate() {
        let row = i + 2; // 1-based, after the header
        let rec = rec.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        if !(rec.prob > 0.0 && rec.prob < 1.0) {
            return Err(Error::Parse {
                row,
                message: format!("probability {} outside (0,1)", rec.prob),
            });
        }
        if !rec.value.is_finite() || rec.value < 0.0 {
            return Err(Error::Parse {
                row,
                message: format!("value {} must be a nonnegative real", rec.value),
            });
        }
        if !(1..=4).contains(&rec.horizon) {
            return Err(Error::Parse {
                row,
                message: format!("horizon {} outside 1..=4", rec.horizon),
            });
        }
        if parse_iso_date(&rec.reference_date).is_none() {
            return Err(Error::Parse {
                row,
                message: format!("reference_date `{}` is not YYYY-MM-DD", rec.reference_date),
            });
        }
        records.push(rec);
        rows.push(row);
    }
    validate_groups(&records, &rows, expected_probs)?;
    Ok(records)
}

/// Checks every (team, location, reference_date, horizon) group for the
/// exact probability set and nondecreasing values.
fn validate_groups(records: &[HubRecord], rows: &[usize], expected: &[f64]) -> Result<()> {
    let mut groups: BTreeMap<(&str, &str, &str, u8), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups
            .entry((&r.team, &r.location, &r.reference_date, r.horizon))
            .or_default()
            .push(i);
    }
    for (key, idxs) in groups {
        let mut sorted = idxs.clone();
        sorted.sort_by(|&a, &b| records[a].prob.partial_cmp(&records[b].prob).unwrap());
        if sorted.len() != expected.len() {
            return Err(Error::Parse {
                row: rows[sorted[0]],
                message: format!(
                    "forecast {key:?} has {} quantiles, expected {}",
                    sorted.len(),
                    expected.len()
                ),
            });
        }
        for (&i, &p) in sorted.iter().zip(expected) {
            if (records[i].prob - p).abs() > PROB_TOL {
                return Err(Error::Parse {
                    row: rows[i],
                    message: format!(
                        "probability {} does not match expected level {p}",
                        records[i].prob
                    ),
                });
            }
        }
        for pair in sorted.windows(2) {
            if records[pair[1]].value < records[pair[0]].value {
                return Err(Error::Parse {
                    row: rows[pair[1]],
                    message: format!(
                        "values decrease in probability ({} after {})",
                        records[pair[1]].value, records[pair[0]].value
                    ),
                });
            }
        }
    }
    Ok(())
}

/// Reads a truth CSV (`location, date, value`), enforcing one record per
/// (location, date).
pub fn parse_truth_csv(path: impl AsRef<Path>) -> Result<Vec<TruthRecord>> {
    let file = std::fs::File::open(path)?;
    parse_truth_reader(file)
}

pub fn parse_truth_reader(reader: impl Read) -> Result<Vec<TruthRecord>> {
    let mut csv = csv::Reader::from_reader(reader);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, rec) in csv.deserialize::<TruthRecord>().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        if parse_iso_date(&rec.date).is_none() {
            return Err(Error::Parse {
                row,
                message: format!("date `{}` is not YYYY-MM-DD", rec.date),
            });
        }
        if !seen.insert((rec.location.clone(), rec.date.clone())) {
            return Err(Error::Parse {
                row,
                message: format!("duplicate truth for ({}, {})", rec.location, rec.date),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

/// Teams with a complete quantile set for every listed week at the given
/// location and horizon 1. Sorted for determinism.
pub fn filter_complete_teams(
    records: &[HubRecord],
    weeks: &[String],
    location: &str,
) -> Vec<String> {
    filter_complete_teams_at(records, weeks, location, 1, FLUSIGHT_PROBS.len())
}

pub fn filter_complete_teams_at(
    records: &[HubRecord],
    weeks: &[String],
    location: &str,
    horizon: u8,
    expected_len: usize,
) -> Vec<String> {
    let mut counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for r in records {
        if r.location == location && r.horizon == horizon {
            *counts.entry((&r.team, &r.reference_date)).or_default() += 1;
        }
    }
    let teams: BTreeSet<&str> = counts.keys().map(|&(t, _)| t).collect();
    teams
        .into_iter()
        .filter(|team| {
            weeks
                .iter()
                .all(|w| counts.get(&(team, w.as_str())).copied() == Some(expected_len))
        })
        .map(str::to_owned)
        .collect()
}

/// Pipeline options besides the sampler configuration.
#[derive(Clone, Debug)]
pub struct HubPipelineConfig {
    /// Geometric discount on past scores.
    pub discount: f64,
    /// Forecast horizon piped through (weeks ahead).
    pub horizon: u8,
    /// Inverse-CDF draws per reconstructed component.
    pub mc_draws: usize,
    pub avs_eta: f64,
    /// Offset in the log transform `ln(value + offset)`; counts can be 0.
    pub log_offset: f64,
    /// Expected quantile levels of the archive.
    pub expected_probs: Vec<f64>,
}

impl Default for HubPipelineConfig {
    fn default() -> Self {
        Self {
            discount: 0.98,
            horizon: 1,
            mc_draws: 10_000,
            avs_eta: 1.0,
            log_offset: 1.0,
            expected_probs: FLUSIGHT_PROBS.to_vec(),
        }
    }
}

/// Per-(location, week, method) pooled-forecast scores.
#[derive(Clone, Debug, Serialize)]
pub struct HubScoreRow {
    pub location: String,
    pub reference_date: String,
    pub target_date: String,
    pub method: Method,
    /// Monte-Carlo CRPS of the linear pool on the log(value+offset) scale.
    pub crps_log: f64,
    /// WIS of the per-quantile weighted-average ensemble on the raw scale.
    pub wis_raw: f64,
}

/// Fitted weight of one team in one week's ensemble.
#[derive(Clone, Debug, Serialize)]
pub struct HubWeightRow {
    pub location: String,
    pub reference_date: String,
    pub method: Method,
    pub team: String,
    pub weight: f64,
}

/// Mean scores grouped by location or by week.
#[derive(Clone, Debug, Serialize)]
pub struct HubMeanRow {
    pub key: String,
    pub method: Method,
    pub mean_crps_log: f64,
    pub mean_wis_raw: f64,
    pub n_scored: usize,
}

/// How many times each method earned each rank (1 = best mean CRPS).
#[derive(Clone, Debug, Serialize)]
pub struct HubRankRow {
    pub rank: usize,
    pub method: Method,
    pub by_location: usize,
    pub by_week: usize,
}

#[derive(Clone, Debug, Default)]
pub struct HubReport {
    pub scores: Vec<HubScoreRow>,
    pub weights: Vec<HubWeightRow>,
    pub location_means: Vec<HubMeanRow>,
    pub week_means: Vec<HubMeanRow>,
    pub rank_counts: Vec<HubRankRow>,
    /// Human-readable notices: skipped locations and unscored weeks.
    pub notices: Vec<String>,
}

/// Everything cached about one scored week at one location.
struct WeekScore {
    log_truth: f64,
    terms: MixtureCrpsTerms,
    abs_obs: Vec<f64>,
    /// Per-team CRPS (log scale) and log predictive density at the truth.
    team_crps: Vec<f64>,
    team_loglik: Vec<f64>,
}

/// A scored week with everything both fitting and scoring need.
struct PreparedWeek {
    reference_date: String,
    target_date: String,
    raw_truth: f64,
    /// Raw-scale quantile values per team, aligned with the level set.
    raw_values: Vec<Vec<f64>>,
    score: WeekScore,
}

/// Reconstructs, samples, and scores every truth-covered week of one
/// location. Returns `None` (with a notice) when the location has no
/// complete team.
fn prepare_location(
    records: &[HubRecord],
    truth_map: &BTreeMap<(&str, &str), u64>,
    gibbs_seed: u64,
    opts: &HubPipelineConfig,
    location: &str,
    loc_idx: u64,
    notices: &mut Vec<String>,
) -> Result<Option<(Vec<String>, Vec<PreparedWeek>)>> {
    let weeks: Vec<String> = records
        .iter()
        .filter(|r| r.location == location && r.horizon == opts.horizon)
        .map(|r| r.reference_date.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if weeks.is_empty() {
        notices.push(format!(
            "{location}: no forecasts at horizon {}",
            opts.horizon
        ));
        return Ok(None);
    }
    let teams = filter_complete_teams_at(
        records,
        &weeks,
        location,
        opts.horizon,
        opts.expected_probs.len(),
    );
    if teams.is_empty() {
        notices.push(format!(
            "{location}: skipped, no team submitted every week"
        ));
        return Ok(None);
    }
    let c = teams.len();
    let team_idx: BTreeMap<&str, usize> =
        teams.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let week_idx: BTreeMap<&str, usize> =
        weeks.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();

    // (team, week) -> raw quantile values sorted by probability.
    let mut quantiles: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    let mut sortable: Vec<&HubRecord> = records
        .iter()
        .filter(|r| {
            r.location == location
                && r.horizon == opts.horizon
                && team_idx.contains_key(r.team.as_str())
        })
        .collect();
    sortable.sort_by(|a, b| a.prob.partial_cmp(&b.prob).unwrap());
    for r in sortable {
        let key = (team_idx[r.team.as_str()], week_idx[r.reference_date.as_str()]);
        quantiles.entry(key).or_default().push(r.value);
    }

    let probs = &opts.expected_probs;
    let mut prepared = Vec::new();
    for (wi, week) in weeks.iter().enumerate() {
        let ref_date = parse_iso_date(week).expect("validated at parse");
        let target = ref_date + chrono::Duration::days(7 * opts.horizon as i64);
        let target_str = target.format("%Y-%m-%d").to_string();
        let Some(&truth_count) = truth_map.get(&(location, target_str.as_str())) else {
            notices.push(format!(
                "{location}: week {week} skipped, no truth for {target_str}"
            ));
            continue;
        };
        let raw_truth = truth_count as f64;
        let log_truth = (raw_truth + opts.log_offset).ln();

        let mut comps: Vec<ComponentForecast> = Vec::with_capacity(c);
        let mut samples: Vec<Vec<f64>> = Vec::with_capacity(c);
        let mut raw_values: Vec<Vec<f64>> = Vec::with_capacity(c);
        for ti in 0..c {
            let values = quantiles
                .get(&(ti, wi))
                .expect("complete teams have every week");
            let log_values: Vec<f64> =
                values.iter().map(|&v| (v + opts.log_offset).ln()).collect();
            let tail = ComponentForecast::default_tail_rate(&log_values);
            let f = ComponentForecast::from_quantiles(probs, &log_values, tail)?;
            let mut rng = derived_rng(
                gibbs_seed,
                "hub-samples",
                (loc_idx << 40) | ((wi as u64) << 20) | ti as u64,
            );
            samples.push(f.sample(opts.mc_draws, &mut rng));
            comps.push(f);
            raw_values.push(values.clone());
        }
        let mut terms_rng = derived_rng(gibbs_seed, "hub-terms", (loc_idx << 20) | wi as u64);
        let terms = MixtureCrpsTerms::from_samples(&samples, &mut terms_rng)?;
        let abs_obs: Vec<f64> =
            samples.iter().map(|s| mean_abs_to_obs(s, log_truth)).collect();
        let team_crps: Vec<f64> = (0..c)
            .map(|ti| abs_obs[ti] - 0.5 * terms.cross_abs(ti, ti))
            .collect();
        let team_loglik: Vec<f64> = comps
            .iter()
            .map(|f| {
                let d = f.pdf(log_truth);
                if d > 0.0 {
                    d.ln()
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        prepared.push(PreparedWeek {
            reference_date: week.clone(),
            target_date: target_str,
            raw_truth,
            raw_values,
            score: WeekScore {
                log_truth,
                terms,
                abs_obs,
                team_crps,
                team_loglik,
            },
        });
    }
    Ok(Some((teams, prepared)))
}

/// Runs the weekly dynamic-ensemble pipeline over every location in the
/// records. `gibbs` supplies the sampler geometry, learning rate, and
/// seed; its Dirichlet parameter is broadcast to the per-location team
/// count when the lengths disagree.
pub fn run_hub_pipeline(
    records: &[HubRecord],
    truth: &[TruthRecord],
    gibbs: &GibbsConfig,
    methods: &[Method],
    opts: &HubPipelineConfig,
) -> Result<HubReport> {
    if methods.is_empty() {
        return Err(Error::invalid("need at least one method"));
    }
    let truth_map: BTreeMap<(&str, &str), u64> = truth
        .iter()
        .map(|t| ((t.location.as_str(), t.date.as_str()), t.value))
        .collect();
    let locations: Vec<String> = records
        .iter()
        .map(|r| r.location.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let per_location: Vec<Result<HubReport>> = locations
        .par_iter()
        .enumerate()
        .map(|(loc_idx, loc)| {
            run_location(
                records, &truth_map, gibbs, methods, opts, loc, loc_idx as u64,
            )
        })
        .collect();
    let mut report = HubReport::default();
    for res in per_location {
        let part = res?;
        report.scores.extend(part.scores);
        report.weights.extend(part.weights);
        report.notices.extend(part.notices);
    }
    aggregate_report(&mut report, methods);
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn run_location(
    records: &[HubRecord],
    truth_map: &BTreeMap<(&str, &str), u64>,
    gibbs: &GibbsConfig,
    methods: &[Method],
    opts: &HubPipelineConfig,
    location: &str,
    loc_idx: u64,
) -> Result<HubReport> {
    let mut report = HubReport::default();
    let Some((teams, prepared)) = prepare_location(
        records,
        truth_map,
        gibbs.seed,
        opts,
        location,
        loc_idx,
        &mut report.notices,
    )?
    else {
        return Ok(report);
    };
    let c = teams.len();
    let probs = &opts.expected_probs;
    let mut history: Vec<&WeekScore> = Vec::new();
    for (k, week) in prepared.iter().enumerate() {
        for &method in methods {
            let w = fit_hub_weights(method, c, &history, gibbs, opts, loc_idx, k)?;
            let crps_log = week.score.terms.crps(&week.score.abs_obs, &w)?;
            let wis_raw = {
                let pooled: Vec<f64> = (0..probs.len())
                    .map(|qi| {
                        week.raw_values
                            .iter()
                            .zip(w.as_slice())
                            .map(|(vals, &wt)| wt * vals[qi])
                            .sum()
                    })
                    .collect();
                let qf = QuantileForecast::new(probs.clone(), pooled)?;
                weighted_interval_score(&qf, week.raw_truth)
            };
            report.scores.push(HubScoreRow {
                location: location.to_string(),
                reference_date: week.reference_date.clone(),
                target_date: week.target_date.clone(),
                method,
                crps_log,
                wis_raw,
            });
            for (ti, team) in teams.iter().enumerate() {
                report.weights.push(HubWeightRow {
                    location: location.to_string(),
                    reference_date: week.reference_date.clone(),
                    method,
                    team: team.clone(),
                    weight: w[ti],
                });
            }
        }
        history.push(&week.score);
    }
    Ok(report)
}

/// Fits each method's weights for the *upcoming* week of one location,
/// using every scored week as history. This is what a live submission
/// would use.
pub fn fit_latest_weights(
    records: &[HubRecord],
    truth: &[TruthRecord],
    gibbs: &GibbsConfig,
    methods: &[Method],
    opts: &HubPipelineConfig,
    location: &str,
) -> Result<Vec<HubWeightRow>> {
    let truth_map: BTreeMap<(&str, &str), u64> = truth
        .iter()
        .map(|t| ((t.location.as_str(), t.date.as_str()), t.value))
        .collect();
    let mut notices = Vec::new();
    let Some((teams, prepared)) =
        prepare_location(records, &truth_map, gibbs.seed, opts, location, 0, &mut notices)?
    else {
        return Err(Error::invalid(format!(
            "location {location}: {}",
            notices.join("; ")
        )));
    };
    if prepared.is_empty() {
        return Err(Error::invalid(format!(
            "location {location}: no scored weeks (no truth coverage)"
        )));
    }
    let next_week = {
        let last = parse_iso_date(&prepared.last().unwrap().reference_date).unwrap();
        (last + chrono::Duration::days(7)).format("%Y-%m-%d").to_string()
    };
    let history: Vec<&WeekScore> = prepared.iter().map(|p| &p.score).collect();
    let mut rows = Vec::new();
    for &method in methods {
        let w = fit_hub_weights(method, teams.len(), &history, gibbs, opts, 0, prepared.len())?;
        for (ti, team) in teams.iter().enumerate() {
            rows.push(HubWeightRow {
                location: location.to_string(),
                reference_date: next_week.clone(),
                method,
                team: team.clone(),
                weight: w[ti],
            });
        }
    }
    Ok(rows)
}

fn fit_hub_weights(
    method: Method,
    c: usize,
    history: &[&WeekScore],
    gibbs: &GibbsConfig,
    opts: &HubPipelineConfig,
    loc_idx: u64,
    week_idx: usize,
) -> Result<SimplexWeights> {
    if history.is_empty() || method == Method::Eqw {
        return eqw_weights(c);
    }
    match method {
        Method::Eqw => unreachable!(),
        Method::Bma | Method::Avs => {
            let loglik: Vec<Vec<f64>> = history.iter().map(|h| h.team_loglik.clone()).collect();
            let score: Vec<Vec<f64>> = history.iter().map(|h| h.team_crps.clone()).collect();
            let panel =
                ModelEvidencePanel::new(loglik, score, SimplexWeights::uniform(c)?, opts.discount)?;
            if method == Method::Bma {
                bma_weights(&panel)
            } else {
                avs_weights(&panel, opts.avs_eta)
            }
        }
        Method::Sgp | Method::Sgp50 => {
            let draws = sgp_history_posterior(
                c,
                history,
                gibbs,
                opts,
                loc_idx,
                week_idx,
                method == Method::Sgp50,
            )?;
            posterior_mean_weights(&draws)
        }
    }
}

/// Risk context over the scored history (dynamic mode, discounted).
fn history_context(history: &[&WeekScore], discount: f64) -> Result<RiskContext> {
    let observations: Vec<f64> = history.iter().map(|h| h.log_truth).collect();
    let terms: Vec<MixtureCrpsTerms> = history.iter().map(|h| h.terms.clone()).collect();
    let obs_linear: Vec<Vec<f64>> = history.iter().map(|h| h.abs_obs.clone()).collect();
    let terms_idx: Vec<usize> = (0..history.len()).collect();
    RiskContext::from_parts(
        RiskMode::Dynamic,
        discount,
        observations,
        terms,
        obs_linear,
        terms_idx,
    )
}

#[allow(clippy::too_many_arguments)]
fn sgp_history_posterior(
    c: usize,
    history: &[&WeekScore],
    gibbs: &GibbsConfig,
    opts: &HubPipelineConfig,
    loc_idx: u64,
    week_idx: usize,
    strong_prior: bool,
) -> Result<crate::sgp::PosteriorDraws> {
    let ctx = history_context(history, opts.discount)?;
    let alpha = if strong_prior {
        vec![50.0; c]
    } else if gibbs.dirichlet_alpha.len() == c {
        gibbs.dirichlet_alpha.clone()
    } else {
        vec![*gibbs.dirichlet_alpha.first().unwrap_or(&1.0); c]
    };
    let cfg = GibbsConfig {
        dirichlet_alpha: alpha,
        seed: derive_seed(gibbs.seed, "hub-fit", (loc_idx << 24) | week_idx as u64),
        ..gibbs.clone()
    };
    sample_posterior(&ctx, &cfg)
}

/// Fits the stacked Gibbs posterior for the upcoming week of one
/// location over its full scored history and returns the team roster
/// with the raw draws (for diagnostics or persistence).
pub fn fit_latest_posterior(
    records: &[HubRecord],
    truth: &[TruthRecord],
    gibbs: &GibbsConfig,
    opts: &HubPipelineConfig,
    location: &str,
    strong_prior: bool,
) -> Result<(Vec<String>, crate::sgp::PosteriorDraws)> {
    let (teams, history) = latest_history(records, truth, gibbs.seed, opts, location)?;
    let refs: Vec<&WeekScore> = history.iter().collect();
    let draws = sgp_history_posterior(
        teams.len(),
        &refs,
        gibbs,
        opts,
        0,
        history.len(),
        strong_prior,
    )?;
    Ok((teams, draws))
}

/// The dynamic risk context over one location's full scored history,
/// e.g. for learning-rate tuning.
pub fn latest_risk_context(
    records: &[HubRecord],
    truth: &[TruthRecord],
    seed: u64,
    opts: &HubPipelineConfig,
    location: &str,
) -> Result<RiskContext> {
    let (_, history) = latest_history(records, truth, seed, opts, location)?;
    let refs: Vec<&WeekScore> = history.iter().collect();
    history_context(&refs, opts.discount)
}

fn latest_history(
    records: &[HubRecord],
    truth: &[TruthRecord],
    seed: u64,
    opts: &HubPipelineConfig,
    location: &str,
) -> Result<(Vec<String>, Vec<WeekScore>)> {
    let truth_map: BTreeMap<(&str, &str), u64> = truth
        .iter()
        .map(|t| ((t.location.as_str(), t.date.as_str()), t.value))
        .collect();
    let mut notices = Vec::new();
    let Some((teams, prepared)) =
        prepare_location(records, &truth_map, seed, opts, location, 0, &mut notices)?
    else {
        return Err(Error::invalid(format!(
            "location {location}: {}",
            notices.join("; ")
        )));
    };
    if prepared.is_empty() {
        return Err(Error::invalid(format!(
            "location {location}: no scored weeks (no truth coverage)"
        )));
    }
    Ok((teams, prepared.into_iter().map(|p| p.score).collect()))
}

fn aggregate_report(report: &mut HubReport, methods: &[Method]) {
    let mut by_loc: BTreeMap<(String, Method), (f64, f64, usize)> = BTreeMap::new();
    let mut by_week: BTreeMap<(String, Method), (f64, f64, usize)> = BTreeMap::new();
    for s in &report.scores {
        let e = by_loc
            .entry((s.location.clone(), s.method))
            .or_insert((0.0, 0.0, 0));
        e.0 += s.crps_log;
        e.1 += s.wis_raw;
        e.2 += 1;
        let e = by_week
            .entry((s.reference_date.clone(), s.method))
            .or_insert((0.0, 0.0, 0));
        e.0 += s.crps_log;
        e.1 += s.wis_raw;
        e.2 += 1;
    }
    let to_rows = |m: &BTreeMap<(String, Method), (f64, f64, usize)>| -> Vec<HubMeanRow> {
        m.iter()
            .map(|((key, method), &(crps, wis, n))| HubMeanRow {
                key: key.clone(),
                method: *method,
                mean_crps_log: crps / n as f64,
                mean_wis_raw: wis / n as f64,
                n_scored: n,
            })
            .collect()
    };
    report.location_means = to_rows(&by_loc);
    report.week_means = to_rows(&by_week);
    report.rank_counts = rank_counts(&report.location_means, &report.week_means, methods);
}

/// Ranks methods by mean CRPS within each key (1 = lowest), breaking ties
/// by method name, and counts rank occurrences. Each method column sums
/// to the number of keys.
fn rank_counts(
    location_means: &[HubMeanRow],
    week_means: &[HubMeanRow],
    methods: &[Method],
) -> Vec<HubRankRow> {
    let count = |rows: &[HubMeanRow]| -> BTreeMap<(usize, Method), usize> {
        let mut grouped: BTreeMap<&str, Vec<(Method, f64)>> = BTreeMap::new();
        for r in rows {
            grouped
                .entry(r.key.as_str())
                .or_default()
                .push((r.method, r.mean_crps_log));
        }
        let mut counts = BTreeMap::new();
        for (_, mut entries) in grouped {
            entries.sort_by(|a, b| {
                a.1.partial_cmp(&b.1)
                    .unwrap()
                    .then_with(|| a.0.to_string().cmp(&b.0.to_string()))
            });
            for (rank0, (method, _)) in entries.into_iter().enumerate() {
                *counts.entry((rank0 + 1, method)).or_default() += 1;
            }
        }
        counts
    };
    let loc_counts = count(location_means);
    let week_counts = count(week_means);
    let mut out = Vec::new();
    for rank in 1..=methods.len() {
        for &method in methods {
            out.push(HubRankRow {
                rank,
                method,
                by_location: loc_counts.get(&(rank, method)).copied().unwrap_or(0),
                by_week: week_counts.get(&(rank, method)).copied().unwrap_or(0),
            });
        }
    }
    out
}

impl HubReport {
    pub fn write_scores_csv(&self, w: impl std::io::Write) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        for row in &self.scores {
            csv.serialize(row)?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn write_weights_csv(&self, w: impl std::io::Write) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        for row in &self.weights {
            csv.serialize(row)?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn write_location_means_csv(&self, w: impl std::io::Write) -> Result<()> {
        write_means(&self.location_means, w)
    }

    pub fn write_week_means_csv(&self, w: impl std::io::Write) -> Result<()> {
        write_means(&self.week_means, w)
    }

    pub fn write_rank_counts_csv(&self, w: impl std::io::Write) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        for row in &self.rank_counts {
            csv.serialize(row)?;
        }
        csv.flush()?;
        Ok(())
    }
}

fn write_means(rows: &[HubMeanRow], w: impl std::io::Write) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    for row in rows {
        csv.serialize(row)?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "team,location,reference_date,horizon,output_type_id,value\n";

    fn block(team: &str, week: &str, base: f64) -> String {
        FLUSIGHT_PROBS
            .iter()
            .map(|p| format!("{team},US,{week},1,{p},{}\n", base + 10.0 * p))
            .collect()
    }

    #[test]
    fn empty_file_with_header_parses_to_empty_list() {
        let records = parse_hub_reader(HEADER.as_bytes(), &FLUSIGHT_PROBS).unwrap();
        assert!(records.is_empty());
    }

    #[test]
    fn well_formed_block_parses() {
        let csv = format!("{HEADER}{}", block("alpha", "2023-11-04", 50.0));
        let records = parse_hub_reader(csv.as_bytes(), &FLUSIGHT_PROBS).unwrap();
        assert_eq!(records.len(), 23);
        assert!(records.windows(2).all(|w| w[1].value >= w[0].value));
    }

    #[test]
    fn out_of_range_probability_names_the_row() {
        let csv = format!("{HEADER}alpha,US,2023-11-04,1,1.5,10\n");
        match parse_hub_reader(csv.as_bytes(), &FLUSIGHT_PROBS) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_rejected() {
        let csv = "team,location,reference_date,horizon,value\na,US,2023-11-04,1,10\n";
        assert!(matches!(
            parse_hub_reader(csv.as_bytes(), &FLUSIGHT_PROBS),
            Err(Error::Parse { row: 1, .. })
        ));
    }

    #[test]
    fn non_numeric_value_is_rejected_with_row() {
        let csv = format!("{HEADER}alpha,US,2023-11-04,1,0.5,abc\n");
        assert!(matches!(
            parse_hub_reader(csv.as_bytes(), &FLUSIGHT_PROBS),
            Err(Error::Parse { row: 2, .. })
        ));
    }

    #[test]
    fn quantile_count_mismatch_is_rejected() {
        let mut csv = format!("{HEADER}{}", block("alpha", "2023-11-04", 50.0));
        csv = csv.lines().take(1 + 22).collect::<Vec<_>>().join("\n") + "\n";
        assert!(parse_hub_reader(csv.as_bytes(), &FLUSIGHT_PROBS).is_err());
    }

    #[test]
    fn decreasing_values_are_rejected_with_row() {
        let mut rows = block("alpha", "2023-11-04", 50.0);
        rows = rows.replace("50.5\n", "0.01\n"); // the p=0.05 row dips
        let csv = format!("{HEADER}{rows}");
        assert!(matches!(
            parse_hub_reader(csv.as_bytes(), &FLUSIGHT_PROBS),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn filter_drops_teams_missing_a_week() {
        let csv = format!(
            "{HEADER}{}{}{}",
            block("alpha", "2023-11-04", 50.0),
            block("alpha", "2023-11-11", 52.0),
            block("beta", "2023-11-04", 40.0),
        );
        let records = parse_hub_reader(csv.as_bytes(), &FLUSIGHT_PROBS).unwrap();
        let weeks = vec!["2023-11-04".to_string(), "2023-11-11".to_string()];
        assert_eq!(filter_complete_teams(&records, &weeks, "US"), vec!["alpha"]);
        let one_week = vec!["2023-11-04".to_string()];
        assert_eq!(
            filter_complete_teams(&records, &one_week, "US"),
            vec!["alpha", "beta"]
        );
        assert!(filter_complete_teams(&records, &weeks, "elsewhere").is_empty());
    }

    #[test]
    fn truth_parser_rejects_duplicates() {
        let csv = "location,date,value\nUS,2023-11-04,120\nUS,2023-11-04,130\n";
        assert!(matches!(
            parse_truth_reader(csv.as_bytes()),
            Err(Error::Parse { row: 3, .. })
        ));
        let ok = "location,date,value\nUS,2023-11-04,120\nUS,2023-11-11,130\n";
        assert_eq!(parse_truth_reader(ok.as_bytes()).unwrap().len(), 2);
    }
}
