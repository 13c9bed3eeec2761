//! Data generators and experiment drivers for the three simulation
//! studies, plus a synthetic hub-archive generator for end-to-end
//! pipeline runs without real submission data.
//!
//! Every study is replicated; replicates run in parallel, each on RNG
//! streams derived from `(seed, replicate)`, so reports are byte-identical
//! for a fixed seed regardless of thread scheduling.

mod dynamic;
mod hubgen;
mod iid;
mod sir;

pub use dynamic::{gen_dynamic_mixture, DynamicStudyConfig};
pub use hubgen::{gen_synthetic_hub, SyntheticHubConfig};
pub use iid::{gen_iid_mixture, IidStudyConfig};
pub use sir::{fit_sir_components, gen_sir, SirStudyConfig};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weight-selection methods compared by the studies and the hub pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sgp,
    /// SGP with the strong symmetric Dirichlet(50) regularization prior.
    Sgp50,
    Avs,
    Bma,
    Eqw,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Sgp,
        Method::Sgp50,
        Method::Avs,
        Method::Bma,
        Method::Eqw,
    ];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::Sgp => "sgp",
            Method::Sgp50 => "sgp50",
            Method::Avs => "avs",
            Method::Bma => "bma",
            Method::Eqw => "eqw",
        };
        f.write_str(s)
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgp" => Ok(Method::Sgp),
            "sgp50" => Ok(Method::Sgp50),
            "avs" => Ok(Method::Avs),
            "bma" => Ok(Method::Bma),
            "eqw" => Ok(Method::Eqw),
            other => Err(Error::invalid(format!(
                "unknown method `{other}` (expected sgp, sgp50, avs, bma, eqw)"
            ))),
        }
    }
}

/// Metrics emitted by the study drivers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Crps,
    Logs,
    Pit,
    Uwd1,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Metric::Crps => "crps",
            Metric::Logs => "logs",
            Metric::Pit => "pit",
            Metric::Uwd1 => "uwd1",
        };
        f.write_str(s)
    }
}

/// One long-format result row. For the i.i.d. study `t` carries the
/// training sample size; for the time studies it is the 1-based forecast
/// target time, with `t = 0` marking whole-replicate metrics (UWD1).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScoreRow {
    pub study: String,
    pub method: Method,
    pub replicate: usize,
    pub t: usize,
    pub metric: Metric,
    pub value: f64,
}

/// Aggregate over replicates for one (study, method, t, metric) cell. The
/// paper-style displays need both the mean and the median.
#[derive(Clone, Debug, Serialize)]
pub struct SummaryRow {
    pub study: String,
    pub method: Method,
    pub t: usize,
    pub metric: Metric,
    pub mean: f64,
    pub median: f64,
    pub replicates: usize,
}

#[derive(Clone, Debug, Default)]
pub struct StudyReport {
    pub rows: Vec<ScoreRow>,
}

impl StudyReport {
    /// Means and medians over replicates, keyed and ordered by
    /// (study, method, t, metric).
    pub fn summary(&self) -> Vec<SummaryRow> {
        use std::collections::BTreeMap;
        let mut groups: BTreeMap<(String, Method, usize, Metric), Vec<f64>> = BTreeMap::new();
        for r in &self.rows {
            groups
                .entry((r.study.clone(), r.method, r.t, r.metric))
                .or_default()
                .push(r.value);
        }
        groups
            .into_iter()
            .map(|((study, method, t, metric), values)| SummaryRow {
                study,
                method,
                t,
                metric,
                mean: crate::math::mean(&values),
                median: crate::math::median(&values),
                replicates: values.len(),
            })
            .collect()
    }

    pub fn write_csv(&self, w: impl std::io::Write) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        for row in &self.rows {
            csv.serialize(row)?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn write_summary_csv(&self, w: impl std::io::Write) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        for row in self.summary() {
            csv.serialize(&row)?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn read_csv(r: impl std::io::Read) -> Result<Self> {
        let mut csv = csv::Reader::from_reader(r);
        let mut rows = Vec::new();
        for rec in csv.deserialize::<ScoreRow>() {
            rows.push(rec?);
        }
        Ok(StudyReport { rows })
    }
}

/// Sampler geometry shared by the study drivers. Study fits run many
/// times per replicate, so the default chain is much shorter than the
/// production [`crate::sgp::GibbsConfig`] default; paper-scale settings
/// are reachable through these fields.
#[derive(Clone, Debug)]
pub struct SamplerSettings {
    pub chains: usize,
    pub draws_per_chain: usize,
    pub burn_in: usize,
    /// SGP learning rate; `None` uses the study default (15 for the
    /// i.i.d. and dynamic studies, 1 for the SIR study).
    pub sgp_eta: Option<f64>,
    pub avs_eta: f64,
    pub step_scale: f64,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self {
            chains: 1,
            draws_per_chain: 3_000,
            burn_in: 600,
            sgp_eta: None,
            avs_eta: 1.0,
            step_scale: 0.5,
        }
    }
}

/// Which study to run, with its configuration.
#[derive(Clone, Debug)]
pub enum StudySpec {
    Iid(IidStudyConfig),
    Dynamic(DynamicStudyConfig),
    Sir(SirStudyConfig),
}

impl StudySpec {
    pub fn name(&self) -> &'static str {
        match self {
            StudySpec::Iid(_) => "iid",
            StudySpec::Dynamic(_) => "dynamic",
            StudySpec::Sir(_) => "sir",
        }
    }
}

/// Runs one simulation study for the requested methods and returns the
/// long-format report. Deterministic given the config seeds.
pub fn run_study(
    spec: &StudySpec,
    methods: &[Method],
    sampler: &SamplerSettings,
) -> Result<StudyReport> {
    if methods.is_empty() {
        return Err(Error::invalid("need at least one method"));
    }
    let mut seen = std::collections::BTreeSet::new();
    for m in methods {
        if !seen.insert(*m) {
            return Err(Error::invalid(format!("method {m} listed twice")));
        }
    }
    match spec {
        StudySpec::Iid(cfg) => iid::run(cfg, methods, sampler),
        StudySpec::Dynamic(cfg) => dynamic::run(cfg, methods, sampler),
        StudySpec::Sir(cfg) => sir::run(cfg, methods, sampler),
    }
}

/// The six fixed unit-variance candidate forecasters shared by the
/// i.i.d. and dynamic studies.
pub(crate) const CANDIDATE_MEANS: [f64; 6] = [0.0, 2.0, 4.0, 6.0, 8.0, 10.0];
