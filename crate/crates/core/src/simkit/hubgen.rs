//! Synthetic hub-format archive generator: several locations with
//! seasonal epidemic-like truth curves and a team roster in which the
//! first `good_teams` submit sharp, nearly unbiased quantile forecasts
//! while the rest are biased and wide. Lets the full pipeline run and be
//! tested without real submission data.

use chrono::NaiveDate;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::hub::{HubRecord, TruthRecord, FLUSIGHT_PROBS};
use crate::math::{derived_rng, normal_quantile};

#[derive(Clone, Debug)]
pub struct SyntheticHubConfig {
    pub teams: usize,
    /// The first `good_teams` team indices get sharp, low-bias forecasts.
    pub good_teams: usize,
    pub locations: usize,
    /// Number of submission weeks; truth extends one week further so
    /// every horizon-1 forecast has a target.
    pub weeks: usize,
    pub base_level: f64,
    /// ISO date of week 1.
    pub start_date: String,
    pub seed: u64,
}

impl Default for SyntheticHubConfig {
    fn default() -> Self {
        Self {
            teams: 10,
            good_teams: 3,
            locations: 3,
            weeks: 20,
            base_level: 80.0,
            start_date: "2023-10-07".into(),
            seed: 0,
        }
    }
}

/// Deterministic team identifier for index `i`.
pub fn team_name(i: usize) -> String {
    format!("team{i:02}")
}

fn location_name(i: usize) -> String {
    format!("loc{i:02}")
}

/// Generates the forecast archive and matching truth. Good teams center
/// on the (future) truth with ~10% predictive spread; the rest carry a
/// fixed multiplicative bias up to ±35% and triple the spread.
pub fn gen_synthetic_hub(cfg: &SyntheticHubConfig) -> Result<(Vec<HubRecord>, Vec<TruthRecord>)> {
    if cfg.teams == 0 || cfg.locations == 0 || cfg.weeks < 2 {
        return Err(Error::invalid("need teams, locations, and at least 2 weeks"));
    }
    if cfg.good_teams > cfg.teams {
        return Err(Error::invalid("good_teams exceeds teams"));
    }
    let start = NaiveDate::parse_from_str(&cfg.start_date, "%Y-%m-%d")
        .map_err(|e| Error::invalid(format!("start_date: {e}")))?;
    let date = |week: usize| {
        (start + chrono::Duration::days(7 * (week as i64 - 1)))
            .format("%Y-%m-%d")
            .to_string()
    };

    // Truth: one seasonal bump per location, Poisson-observed.
    let mut truth = Vec::new();
    let mut truth_counts = vec![vec![0u64; cfg.weeks + 2]; cfg.locations];
    for loc in 0..cfg.locations {
        let mut rng = derived_rng(cfg.seed, "hubgen-truth", loc as u64);
        let peak = cfg.weeks as f64 * (0.4 + 0.15 * loc as f64 / cfg.locations.max(1) as f64);
        for week in 1..=cfg.weeks + 1 {
            let z = (week as f64 - peak) / 6.0;
            let level = cfg.base_level * (0.3 + 1.7 * (-z * z).exp());
            let count = Poisson::new(level.max(1e-9)).unwrap().sample(&mut rng) as u64;
            truth_counts[loc][week] = count;
            truth.push(TruthRecord {
                location: location_name(loc),
                date: date(week),
                value: count,
            });
        }
    }

    let mut records = Vec::new();
    for loc in 0..cfg.locations {
        for week in 1..=cfg.weeks {
            let target = truth_counts[loc][week + 1] as f64;
            for team in 0..cfg.teams {
                let mut rng = derived_rng(
                    cfg.seed,
                    "hubgen-forecast",
                    ((loc as u64) << 40) | ((week as u64) << 20) | team as u64,
                );
                let (center, sd) = if team < cfg.good_teams {
                    let jitter: f64 = rng.sample::<f64, _>(StandardNormal);
                    (
                        target * (1.0 + 0.02 * jitter),
                        (0.10 * target).max(3.0),
                    )
                } else {
                    // Fixed per-team bias in ±[0.20, 0.40], alternating sign.
                    let k = (team - cfg.good_teams) as f64;
                    let magnitude = 0.20 + 0.05 * (k % 5.0);
                    let bias = if team % 2 == 0 { magnitude } else { -magnitude };
                    let jitter: f64 = rng.sample::<f64, _>(StandardNormal);
                    (
                        (target * (1.0 + bias) + 2.0 * jitter).max(0.0),
                        (0.30 * target).max(6.0),
                    )
                };
                for &p in FLUSIGHT_PROBS.iter() {
                    let q = (center + sd * normal_quantile(p)).max(0.0);
                    records.push(HubRecord {
                        team: team_name(team),
                        location: location_name(loc),
                        reference_date: date(week),
                        horizon: 1,
                        prob: p,
                        value: q,
                    });
                }
            }
        }
    }
    Ok((records, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hub::filter_complete_teams;

    #[test]
    fn archive_has_complete_shape() {
        let cfg = SyntheticHubConfig {
            teams: 4,
            good_teams: 2,
            locations: 2,
            weeks: 6,
            seed: 3,
            ..Default::default()
        };
        let (records, truth) = gen_synthetic_hub(&cfg).unwrap();
        assert_eq!(records.len(), 4 * 2 * 6 * FLUSIGHT_PROBS.len());
        assert_eq!(truth.len(), 2 * 7);
        let weeks: Vec<String> = records
            .iter()
            .filter(|r| r.location == "loc00")
            .map(|r| r.reference_date.clone())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        assert_eq!(weeks.len(), 6);
        let teams = filter_complete_teams(&records, &weeks, "loc00");
        assert_eq!(teams.len(), 4);
    }

    #[test]
    fn quantile_rows_are_valid_under_the_parser() {
        let cfg = SyntheticHubConfig {
            teams: 3,
            good_teams: 1,
            locations: 1,
            weeks: 4,
            seed: 5,
            ..Default::default()
        };
        let (records, _) = gen_synthetic_hub(&cfg).unwrap();
        // Round-trip through CSV and the validating parser.
        let mut buf = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            for r in &records {
                w.serialize(r).unwrap();
            }
            w.flush().unwrap();
        }
        let parsed = crate::hub::parse_hub_reader(buf.as_slice(), &FLUSIGHT_PROBS).unwrap();
        assert_eq!(parsed.len(), records.len());
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SyntheticHubConfig::default();
        let (a, _) = gen_synthetic_hub(&cfg).unwrap();
        let (b, _) = gen_synthetic_hub(&cfg).unwrap();
        assert_eq!(a, b);
    }
}
