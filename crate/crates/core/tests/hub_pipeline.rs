//! End-to-end checks of the weekly hub pipeline on synthetic archives.

use stackpool::hub::{run_hub_pipeline, HubPipelineConfig, HubReport};
use stackpool::sgp::GibbsConfig;
use stackpool::simkit::{gen_synthetic_hub, Method, SyntheticHubConfig};

fn small_gibbs() -> GibbsConfig {
    GibbsConfig::flat_prior(1.0, 1).with_sampling(1, 1_200, 300)
}

fn fast_opts() -> HubPipelineConfig {
    HubPipelineConfig {
        mc_draws: 2_000,
        ..Default::default()
    }
}

fn weight_of(report: &HubReport, method: Method, week: &str, team: &str) -> f64 {
    report
        .weights
        .iter()
        .find(|w| w.method == method && w.reference_date == week && w.team == team)
        .map(|w| w.weight)
        .unwrap_or_else(|| panic!("no weight row for {method} {week} {team}"))
}

#[test]
fn single_team_gets_unit_weight_and_identical_scores() {
    let cfg = SyntheticHubConfig {
        teams: 1,
        good_teams: 1,
        locations: 1,
        weeks: 5,
        seed: 11,
        ..Default::default()
    };
    let (records, truth) = gen_synthetic_hub(&cfg).unwrap();
    let methods = [Method::Sgp, Method::Avs, Method::Bma, Method::Eqw];
    let report =
        run_hub_pipeline(&records, &truth, &small_gibbs(), &methods, &fast_opts()).unwrap();
    for w in &report.weights {
        assert_eq!(w.weight, 1.0);
    }
    // All methods score the same single-component pool.
    for week in ["2023-10-07", "2023-11-04"] {
        let scores: Vec<f64> = methods
            .iter()
            .map(|&m| {
                report
                    .scores
                    .iter()
                    .find(|s| s.method == m && s.reference_date == week)
                    .unwrap()
                    .crps_log
            })
            .collect();
        for s in &scores {
            assert_eq!(*s, scores[0]);
        }
    }
}

#[test]
fn first_week_uses_equal_weights_for_every_method() {
    let cfg = SyntheticHubConfig {
        teams: 4,
        good_teams: 2,
        locations: 1,
        weeks: 4,
        seed: 13,
        ..Default::default()
    };
    let (records, truth) = gen_synthetic_hub(&cfg).unwrap();
    let methods = [Method::Sgp, Method::Avs, Method::Bma, Method::Eqw];
    let report =
        run_hub_pipeline(&records, &truth, &small_gibbs(), &methods, &fast_opts()).unwrap();
    let first_week = "2023-10-07";
    for &m in &methods {
        for team in 0..4 {
            let w = weight_of(&report, m, first_week, &format!("team{team:02}"));
            assert_eq!(w, 0.25, "method {m} team {team}");
        }
    }
}

#[test]
fn dominant_team_accumulates_weight_by_week_ten() {
    // Two teams, one strictly better every week.
    let cfg = SyntheticHubConfig {
        teams: 2,
        good_teams: 1,
        locations: 1,
        weeks: 12,
        seed: 17,
        ..Default::default()
    };
    let (records, truth) = gen_synthetic_hub(&cfg).unwrap();
    let methods = [Method::Sgp, Method::Avs, Method::Bma];
    let report =
        run_hub_pipeline(&records, &truth, &small_gibbs(), &methods, &fast_opts()).unwrap();
    // Reference week 10 = start date + 9 weeks.
    let week10 = "2023-12-09";
    for &m in &methods {
        let w = weight_of(&report, m, week10, "team00");
        assert!(w > 0.5, "method {m} gives the dominator {w}");
    }
}

#[test]
fn pipeline_is_invariant_to_input_row_order() {
    let cfg = SyntheticHubConfig {
        teams: 3,
        good_teams: 1,
        locations: 2,
        weeks: 5,
        seed: 19,
        ..Default::default()
    };
    let (mut records, truth) = gen_synthetic_hub(&cfg).unwrap();
    let methods = [Method::Sgp, Method::Eqw];
    let a = run_hub_pipeline(&records, &truth, &small_gibbs(), &methods, &fast_opts()).unwrap();
    records.reverse();
    records.swap(0, 57);
    let b = run_hub_pipeline(&records, &truth, &small_gibbs(), &methods, &fast_opts()).unwrap();
    assert_eq!(a.scores.len(), b.scores.len());
    for (x, y) in a.scores.iter().zip(&b.scores) {
        assert_eq!(x.crps_log, y.crps_log);
        assert_eq!(x.wis_raw, y.wis_raw);
    }
}

#[test]
fn rank_count_columns_sum_to_location_and_week_totals() {
    let cfg = SyntheticHubConfig {
        teams: 4,
        good_teams: 2,
        locations: 3,
        weeks: 6,
        seed: 23,
        ..Default::default()
    };
    let (records, truth) = gen_synthetic_hub(&cfg).unwrap();
    let methods = [Method::Sgp, Method::Avs, Method::Bma, Method::Eqw];
    let report =
        run_hub_pipeline(&records, &truth, &small_gibbs(), &methods, &fast_opts()).unwrap();
    for &m in &methods {
        let by_loc: usize = report
            .rank_counts
            .iter()
            .filter(|r| r.method == m)
            .map(|r| r.by_location)
            .sum();
        let by_week: usize = report
            .rank_counts
            .iter()
            .filter(|r| r.method == m)
            .map(|r| r.by_week)
            .sum();
        assert_eq!(by_loc, 3, "method {m} location ranks");
        assert_eq!(by_week, 6, "method {m} week ranks");
    }
}

#[test]
fn missing_truth_weeks_are_skipped_with_notice() {
    let cfg = SyntheticHubConfig {
        teams: 2,
        good_teams: 1,
        locations: 1,
        weeks: 5,
        seed: 29,
        ..Default::default()
    };
    let (records, mut truth) = gen_synthetic_hub(&cfg).unwrap();
    // Remove the truth for the final target week.
    let last_date = truth.iter().map(|t| t.date.clone()).max().unwrap();
    truth.retain(|t| t.date != last_date);
    let report = run_hub_pipeline(
        &records,
        &truth,
        &small_gibbs(),
        &[Method::Eqw],
        &fast_opts(),
    )
    .unwrap();
    let scored_weeks: std::collections::BTreeSet<&str> = report
        .scores
        .iter()
        .map(|s| s.reference_date.as_str())
        .collect();
    assert_eq!(scored_weeks.len(), 4);
    assert!(report.notices.iter().any(|n| n.contains("skipped")));
}
