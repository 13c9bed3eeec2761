//! `stackpool`: fit, score, and benchmark linear-pool forecast ensembles.

mod config;
mod manifest;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use manifest::Manifest;
use stackpool::baselines::{avs_weights, bma_weights, eqw_weights, ModelEvidencePanel};
use stackpool::dist::{ComponentForecast, SimplexWeights};
use stackpool::hub::{
    fit_latest_posterior, fit_latest_weights, latest_risk_context, parse_hub_csv,
    parse_truth_csv, run_hub_pipeline, HubPipelineConfig,
};
use stackpool::math::derived_rng;
use stackpool::risk::{RiskContext, ScoreBackend};
use stackpool::scoring::{
    log_score, mean_abs_to_obs, weighted_interval_score, MixtureCrpsTerms, QuantileForecast,
};
use stackpool::sgp::{diagnostics, tune_eta, GibbsConfig, PosteriorDraws};
use stackpool::simkit::{
    gen_iid_mixture, gen_synthetic_hub, run_study, DynamicStudyConfig, IidStudyConfig, Method,
    SamplerSettings, SirStudyConfig, StudySpec, SyntheticHubConfig,
};
use stackpool::{Error, Result};

#[derive(Parser)]
#[command(
    name = "stackpool",
    version,
    about = "Linear-pool forecast combination: Gibbs-posterior stacking, scoring, baselines, simulation studies, and hub pipelines",
    after_help = "All flags have config-file equivalents (`--config file` with `key = value` lines); explicit flags win."
)]
struct Cli {
    /// Worker threads for replicate/location parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Plain key=value config file merged under the command-line flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score hub-format quantile forecasts against observed truth.
    Score(ScoreArgs),
    /// Fit ensemble weights with one method.
    Fit(Box<FitArgs>),
    /// Run a simulation study and write report/summary CSVs.
    Simulate(Box<SimulateArgs>),
    /// Run the weekly dynamic-ensemble pipeline over a hub archive.
    Hub(Box<HubArgs>),
    /// Convergence diagnostics (split R-hat, ESS) for posterior draws.
    Diagnose(Box<DiagnoseArgs>),
    /// Select the Gibbs learning rate by cross-validated held-out CRPS.
    TuneEta(Box<TuneEtaArgs>),
    /// Generate a synthetic hub archive for pipeline runs and demos.
    GenHub(GenHubArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScoreMetric {
    Crps,
    Logs,
    Wis,
}

#[derive(clap::Args)]
struct ScoreArgs {
    /// Hub-format forecast CSV.
    #[arg(long)]
    forecasts: PathBuf,
    /// Truth CSV (location, date, value).
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, value_enum)]
    metric: ScoreMetric,
    /// Score CRPS/LogS on the log(value+1) scale instead of raw counts.
    #[arg(long)]
    log_scale: bool,
    #[arg(long, default_value_t = 1)]
    horizon: u8,
    /// Monte-Carlo draws for the CRPS estimate.
    #[arg(long, default_value_t = 10_000)]
    mc_draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct FitArgs {
    /// One of sgp, sgp50, avs, bma, eqw.
    #[arg(long)]
    method: String,
    /// Component count (eqw without input files).
    #[arg(long)]
    components: Option<usize>,
    /// Score panel CSV (t, component, loglik, crps) for avs/bma/eqw.
    #[arg(long)]
    panel: Option<PathBuf>,
    /// Hub-format forecast CSV (with --truth and --location; any method).
    #[arg(long)]
    forecasts: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    location: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value_t = 0.98)]
    discount: f64,
    #[arg(long, default_value_t = 60_000)]
    draws: usize,
    #[arg(long, default_value_t = 10_000)]
    burn_in: usize,
    #[arg(long, default_value_t = 1)]
    chains: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    mc_draws: usize,
    /// Write posterior draws (chain, draw, component, weight) — SGP only.
    #[arg(long)]
    draws_out: Option<PathBuf>,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StudyArg {
    Iid,
    Dynamic,
    Sir,
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(value_enum)]
    study: StudyArg,
    /// Comma-separated methods (sgp, sgp50, avs, bma, eqw).
    #[arg(long, default_value = "sgp,avs,bma,eqw")]
    methods: String,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for report.csv, summary.csv, manifest.txt.
    #[arg(long)]
    out: PathBuf,
    /// iid: comma-separated training sample sizes.
    #[arg(long)]
    sample_sizes: Option<String>,
    /// iid: fresh truth draws per evaluation.
    #[arg(long)]
    eval_draws: Option<usize>,
    /// dynamic: series length.
    #[arg(long)]
    t_len: Option<usize>,
    /// sir: simulated weeks.
    #[arg(long)]
    weeks: Option<usize>,
    /// sir: first week with enough history to fit components.
    #[arg(long)]
    fit_start: Option<usize>,
    #[arg(long)]
    population: Option<u64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    initial_infected: Option<u64>,
    /// sir: predictive draws per component.
    #[arg(long)]
    component_draws: Option<usize>,
    /// sir: event-by-event simulation instead of tau-leaping.
    #[arg(long)]
    exact_gillespie: bool,
    #[arg(long)]
    discount: Option<f64>,
    #[arg(long, default_value_t = 3_000)]
    draws: usize,
    #[arg(long, default_value_t = 600)]
    burn_in: usize,
    #[arg(long, default_value_t = 1)]
    chains: usize,
    /// SGP learning rate (default: 15 for iid/dynamic, 1 for sir).
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    avs_eta: f64,
}

#[derive(clap::Args)]
struct HubArgs {
    #[arg(long)]
    forecasts: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value = "sgp,avs,bma,eqw")]
    methods: String,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value_t = 0.98)]
    discount: f64,
    #[arg(long, default_value_t = 1)]
    horizon: u8,
    #[arg(long, default_value_t = 10_000)]
    mc_draws: usize,
    #[arg(long, default_value_t = 1.0)]
    avs_eta: f64,
    #[arg(long, default_value_t = 60_000)]
    draws: usize,
    #[arg(long, default_value_t = 10_000)]
    burn_in: usize,
    #[arg(long, default_value_t = 1)]
    chains: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct DiagnoseArgs {
    /// Saved draws CSV (chain, draw, component, weight).
    #[arg(long)]
    draws_csv: Option<PathBuf>,
    /// Or refit from hub inputs with the convergence-audit preset.
    #[arg(long)]
    forecasts: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    location: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value_t = 0.98)]
    discount: f64,
    #[arg(long, default_value_t = 4)]
    chains: usize,
    #[arg(long, default_value_t = 60_000)]
    draws: usize,
    #[arg(long, default_value_t = 10_000)]
    burn_in: usize,
    #[arg(long, default_value_t = 10_000)]
    mc_draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(clap::Args)]
struct TuneEtaArgs {
    /// Comma-separated candidate learning rates.
    #[arg(long, default_value = "1,5,15,50")]
    grid: String,
    /// Cross-validation folds (n for leave-one-out).
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Tune on the built-in i.i.d. study setup.
    #[arg(long)]
    study: Option<StudyArg>,
    /// Sample size for --study iid.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Or tune on hub inputs.
    #[arg(long)]
    forecasts: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    location: Option<String>,
    #[arg(long, default_value_t = 0.98)]
    discount: f64,
    #[arg(long, default_value_t = 10_000)]
    mc_draws: usize,
    #[arg(long, default_value_t = 2_000)]
    draws: usize,
    #[arg(long, default_value_t = 500)]
    burn_in: usize,
    #[arg(long, default_value_t = 1)]
    chains: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(clap::Args)]
struct GenHubArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    teams: usize,
    #[arg(long, default_value_t = 3)]
    good_teams: usize,
    #[arg(long, default_value_t = 3)]
    locations: usize,
    #[arg(long, default_value_t = 20)]
    weeks: usize,
    #[arg(long, default_value_t = 80.0)]
    base_level: f64,
    #[arg(long, default_value = "2023-10-07")]
    start_date: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let mut args: Vec<String> = std::env::args().collect();
    if let Some(path) = config::find_config_arg(&args) {
        match config::load_pairs(&path) {
            Ok(pairs) => config::merge_into_args(&mut args, &pairs),
            Err(e) => {
                eprintln!("error reading config {}: {e}", path.display());
                return ExitCode::from(exit_code_for(&e));
            }
        }
    }
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

/// 1 for validation problems, 2 for I/O problems.
fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Csv(_) => 2,
        _ => 1,
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Score(args) => cmd_score(args),
        Command::Fit(args) => cmd_fit(*args),
        Command::Simulate(args) => cmd_simulate(*args),
        Command::Hub(args) => cmd_hub(*args),
        Command::Diagnose(args) => cmd_diagnose(*args),
        Command::TuneEta(args) => cmd_tune_eta(*args),
        Command::GenHub(args) => cmd_gen_hub(args),
    }
}

fn parse_methods(spec: &str) -> Result<Vec<Method>> {
    let methods: Vec<Method> = spec
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse())
        .collect::<Result<_>>()?;
    if methods.is_empty() {
        return Err(Error::invalid("no methods given"));
    }
    Ok(methods)
}

fn parse_list<T: std::str::FromStr>(spec: &str, what: &str) -> Result<Vec<T>> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad {what} entry `{s}`")))
        })
        .collect()
}

/// Writes `text` to the path or stdout; accompanies file outputs with a
/// manifest next to them.
fn emit(out: Option<&Path>, text: &str, manifest: Option<&Manifest>) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text)?;
            if let Some(m) = manifest {
                let sidecar = path.with_extension("manifest.txt");
                m.write_to(&sidecar)?;
            }
            Ok(())
        }
        None => {
            print!("{text}");
            std::io::stdout().flush()?;
            Ok(())
        }
    }
}

fn cmd_score(args: ScoreArgs) -> Result<()> {
    let records = parse_hub_csv(&args.forecasts)?;
    let truth = parse_truth_csv(&args.truth)?;
    let truth_map: std::collections::BTreeMap<(String, String), u64> = truth
        .into_iter()
        .map(|t| ((t.location.clone(), t.date), t.value))
        .collect();
    // Group rows per forecast.
    let mut groups: std::collections::BTreeMap<(String, String, String), Vec<(f64, f64)>> =
        Default::default();
    for r in &records {
        if r.horizon != args.horizon {
            continue;
        }
        groups
            .entry((r.team.clone(), r.location.clone(), r.reference_date.clone()))
            .or_default()
            .push((r.prob, r.value));
    }
    let mut out = String::from("team,location,reference_date,target_date,horizon,metric,value\n");
    let mut scored = 0usize;
    for ((team, location, week), mut rows) in groups {
        rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let probs: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let values: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let ref_date = chrono::NaiveDate::parse_from_str(&week, "%Y-%m-%d")
            .map_err(|e| Error::invalid(format!("bad date {week}: {e}")))?;
        let target = (ref_date + chrono::Duration::days(7 * args.horizon as i64))
            .format("%Y-%m-%d")
            .to_string();
        let Some(&y_raw) = truth_map.get(&(location.clone(), target.clone())) else {
            eprintln!("note: no truth for {location} {target}, skipping");
            continue;
        };
        let y_raw = y_raw as f64;
        let metric_name = match args.metric {
            ScoreMetric::Crps => "crps",
            ScoreMetric::Logs => "logs",
            ScoreMetric::Wis => "wis",
        };
        let value = match args.metric {
            ScoreMetric::Wis => {
                let qf = QuantileForecast::new(probs.clone(), values.clone())?;
                weighted_interval_score(&qf, y_raw)
            }
            ScoreMetric::Crps | ScoreMetric::Logs => {
                let (vals, y) = if args.log_scale {
                    (
                        values.iter().map(|&v| (v + 1.0).ln()).collect::<Vec<_>>(),
                        (y_raw + 1.0).ln(),
                    )
                } else {
                    (values.clone(), y_raw)
                };
                let tail = ComponentForecast::default_tail_rate(&vals);
                let f = ComponentForecast::from_quantiles(&probs, &vals, tail)?;
                match args.metric {
                    ScoreMetric::Logs => log_score(f.pdf(y))?,
                    _ => {
                        let mut rng = derived_rng(args.seed, "score-cmd", scored as u64);
                        let samples = vec![f.sample(args.mc_draws, &mut rng)];
                        let terms = MixtureCrpsTerms::from_samples(&samples, &mut rng)?;
                        let abs = vec![mean_abs_to_obs(&samples[0], y)];
                        terms.crps(&abs, &SimplexWeights::new(vec![1.0])?)?
                    }
                }
            }
        };
        out.push_str(&format!(
            "{team},{location},{week},{target},{},{metric_name},{value}\n",
            args.horizon
        ));
        scored += 1;
    }
    eprintln!("scored {scored} forecasts");
    let mut m = Manifest::new("score");
    m.set("forecasts", args.forecasts.display());
    m.set("truth", args.truth.display());
    m.set("metric", format!("{:?}", args.metric).to_lowercase());
    m.set("log-scale", args.log_scale);
    m.set("horizon", args.horizon);
    m.set("mc-draws", args.mc_draws);
    m.set("seed", args.seed);
    if let Some(path) = &args.out {
        m.output(path);
    }
    emit(args.out.as_deref(), &out, Some(&m))
}

/// Reads a long-format panel CSV (t, component, loglik, crps).
fn read_panel(path: &Path, discount: f64) -> Result<(Vec<String>, ModelEvidencePanel)> {
    #[derive(serde::Deserialize)]
    struct Row {
        t: usize,
        component: String,
        loglik: f64,
        crps: f64,
    }
    let mut reader = csv::Reader::from_path(path)?;
    let mut cells: std::collections::BTreeMap<(usize, String), (f64, f64)> = Default::default();
    for rec in reader.deserialize::<Row>() {
        let r = rec?;
        cells.insert((r.t, r.component.clone()), (r.loglik, r.crps));
    }
    if cells.is_empty() {
        return Err(Error::invalid("panel file has no rows"));
    }
    let times: Vec<usize> = cells
        .keys()
        .map(|(t, _)| *t)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let components: Vec<String> = cells
        .keys()
        .map(|(_, c)| c.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut loglik = Vec::with_capacity(times.len());
    let mut score = Vec::with_capacity(times.len());
    for &t in &times {
        let mut ll = Vec::with_capacity(components.len());
        let mut sc = Vec::with_capacity(components.len());
        for c in &components {
            let Some(&(l, s)) = cells.get(&(t, c.clone())) else {
                return Err(Error::invalid(format!(
                    "panel missing cell for t={t}, component={c}"
                )));
            };
            ll.push(l);
            sc.push(s);
        }
        loglik.push(ll);
        score.push(sc);
    }
    let prior = SimplexWeights::uniform(components.len())?;
    Ok((
        components,
        ModelEvidencePanel::new(loglik, score, prior, discount)?,
    ))
}

fn weights_csv(names: &[String], w: &SimplexWeights) -> String {
    let mut out = String::from("component,weight\n");
    for (name, &v) in names.iter().zip(w.as_slice()) {
        out.push_str(&format!("{name},{v}\n"));
    }
    out
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let method: Method = args.method.parse()?;
    let gibbs = GibbsConfig {
        eta: args.eta,
        dirichlet_alpha: vec![if method == Method::Sgp50 { 50.0 } else { 1.0 }],
        chains: args.chains,
        draws_per_chain: args.draws,
        burn_in: args.burn_in,
        seed: args.seed,
        step_scale: 0.5,
    };
    let mut m = Manifest::new("fit");
    m.set("method", method);
    m.set("eta", args.eta);
    m.set("discount", args.discount);
    m.set("draws", args.draws);
    m.set("burn-in", args.burn_in);
    m.set("chains", args.chains);
    m.set("seed", args.seed);
    if let Some(path) = &args.out {
        m.output(path);
    }

    let text = match (&args.panel, &args.forecasts) {
        (Some(panel_path), None) => {
            let (names, panel) = read_panel(panel_path, args.discount)?;
            m.set("panel", panel_path.display());
            let w = match method {
                Method::Eqw => eqw_weights(names.len())?,
                Method::Bma => bma_weights(&panel)?,
                Method::Avs => avs_weights(&panel, args.eta)?,
                Method::Sgp | Method::Sgp50 => {
                    return Err(Error::invalid(
                        "SGP needs full forecast distributions (cross-component terms); \
                         pass --forecasts/--truth/--location instead of --panel",
                    ))
                }
            };
            weights_csv(&names, &w)
        }
        (None, Some(forecasts)) => {
            let truth_path = args
                .truth
                .as_ref()
                .ok_or_else(|| Error::invalid("--forecasts requires --truth"))?;
            let location = args
                .location
                .as_ref()
                .ok_or_else(|| Error::invalid("--forecasts requires --location"))?;
            m.set("forecasts", forecasts.display());
            m.set("truth", truth_path.display());
            m.set("location", location);
            m.set("mc-draws", args.mc_draws);
            let records = parse_hub_csv(forecasts)?;
            let truth = parse_truth_csv(truth_path)?;
            let opts = HubPipelineConfig {
                discount: args.discount,
                mc_draws: args.mc_draws,
                avs_eta: args.eta,
                ..Default::default()
            };
            if let Some(draws_path) = &args.draws_out {
                if !matches!(method, Method::Sgp | Method::Sgp50) {
                    return Err(Error::invalid("--draws-out applies to SGP fits only"));
                }
                let (teams, draws) = fit_latest_posterior(
                    &records, &truth, &gibbs, &opts, location,
                    method == Method::Sgp50,
                )?;
                write_draws_csv(draws_path, &draws)?;
                m.output(draws_path);
                let w = stackpool::sgp::posterior_mean_weights(&draws)?;
                weights_csv(&teams, &w)
            } else {
                let rows = fit_latest_weights(&records, &truth, &gibbs, &[method], &opts, location)?;
                let mut out = String::from("component,weight\n");
                for r in &rows {
                    out.push_str(&format!("{},{}\n", r.team, r.weight));
                }
                out
            }
        }
        (None, None) => {
            let c = args.components.ok_or_else(|| {
                Error::invalid("fit needs --components, --panel, or --forecasts/--truth/--location")
            })?;
            if method != Method::Eqw {
                return Err(Error::invalid(
                    "--components alone only supports --method eqw",
                ));
            }
            m.set("components", c);
            let w = eqw_weights(c)?;
            let names: Vec<String> = (0..c).map(|i| format!("component{i}")).collect();
            weights_csv(&names, &w)
        }
        (Some(_), Some(_)) => {
            return Err(Error::invalid("pass either --panel or --forecasts, not both"))
        }
    };
    emit(args.out.as_deref(), &text, Some(&m))
}

fn write_draws_csv(path: &Path, draws: &PosteriorDraws) -> Result<()> {
    let mut out = String::from("chain,draw,component,weight\n");
    for chain in 0..draws.n_chains() {
        for i in 0..draws.per_chain_len() {
            let row = draws.row(chain * draws.per_chain_len() + i);
            for (c, &w) in row.iter().enumerate() {
                out.push_str(&format!("{chain},{i},{c},{w}\n"));
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn read_draws_csv(path: &Path) -> Result<PosteriorDraws> {
    #[derive(serde::Deserialize)]
    struct Row {
        chain: usize,
        draw: usize,
        component: usize,
        weight: f64,
    }
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows: Vec<Row> = Vec::new();
    for rec in reader.deserialize::<Row>() {
        rows.push(rec?);
    }
    if rows.is_empty() {
        return Err(Error::invalid("draws file has no rows"));
    }
    let chains = rows.iter().map(|r| r.chain).max().unwrap() + 1;
    let per_chain = rows.iter().map(|r| r.draw).max().unwrap() + 1;
    let comps = rows.iter().map(|r| r.component).max().unwrap() + 1;
    let mut data = vec![f64::NAN; chains * per_chain * comps];
    for r in rows {
        data[(r.chain * per_chain + r.draw) * comps + r.component] = r.weight;
    }
    if data.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("draws file has missing cells"));
    }
    PosteriorDraws::from_parts(
        data,
        chains,
        per_chain,
        comps,
        f64::NAN,
        GibbsConfig::flat_prior(1.0, comps),
    )
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let methods = parse_methods(&args.methods)?;
    let sampler = SamplerSettings {
        chains: args.chains,
        draws_per_chain: args.draws,
        burn_in: args.burn_in,
        sgp_eta: args.eta,
        avs_eta: args.avs_eta,
        step_scale: 0.5,
    };
    let mut m = Manifest::new(format!("simulate {:?}", args.study).to_lowercase());
    let spec = match args.study {
        StudyArg::Iid => {
            let mut cfg = IidStudyConfig {
                seed: args.seed,
                ..Default::default()
            };
            if let Some(r) = args.replicates {
                cfg.replicates = r;
            }
            if let Some(sizes) = &args.sample_sizes {
                cfg.sample_sizes = parse_list(sizes, "sample size")?;
            }
            if let Some(e) = args.eval_draws {
                cfg.eval_draws = e;
            }
            m.set("replicates", cfg.replicates);
            m.set(
                "sample-sizes",
                cfg.sample_sizes
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join(","),
            );
            m.set("eval-draws", cfg.eval_draws);
            StudySpec::Iid(cfg)
        }
        StudyArg::Dynamic => {
            let mut cfg = DynamicStudyConfig {
                seed: args.seed,
                ..Default::default()
            };
            if let Some(r) = args.replicates {
                cfg.replicates = r;
            }
            if let Some(t) = args.t_len {
                cfg.t_len = t;
            }
            if let Some(d) = args.discount {
                cfg.discount = d;
            }
            m.set("replicates", cfg.replicates);
            m.set("t-len", cfg.t_len);
            m.set("discount", cfg.discount);
            StudySpec::Dynamic(cfg)
        }
        StudyArg::Sir => {
            let mut cfg = SirStudyConfig {
                seed: args.seed,
                ..Default::default()
            };
            if let Some(r) = args.replicates {
                cfg.replicates = r;
            }
            if let Some(w) = args.weeks {
                cfg.weeks = w;
            }
            if let Some(f) = args.fit_start {
                cfg.fit_start_week = f;
            }
            if let Some(p) = args.population {
                cfg.population = p;
            }
            if let Some(b) = args.beta {
                cfg.beta = b;
            }
            if let Some(g) = args.gamma {
                cfg.gamma = g;
            }
            if let Some(i) = args.initial_infected {
                cfg.initial_infected = i;
            }
            if let Some(d) = args.component_draws {
                cfg.component_draws = d;
            }
            if let Some(d) = args.discount {
                cfg.discount = d;
            }
            cfg.exact_gillespie = args.exact_gillespie;
            m.set("replicates", cfg.replicates);
            m.set("weeks", cfg.weeks);
            m.set("fit-start", cfg.fit_start_week);
            m.set("population", cfg.population);
            m.set("beta", cfg.beta);
            m.set("gamma", cfg.gamma);
            m.set("initial-infected", cfg.initial_infected);
            m.set("component-draws", cfg.component_draws);
            m.set("discount", cfg.discount);
            m.set("exact-gillespie", cfg.exact_gillespie);
            StudySpec::Sir(cfg)
        }
    };
    m.set("methods", &args.methods);
    m.set("seed", args.seed);
    m.set("draws", args.draws);
    m.set("burn-in", args.burn_in);
    m.set("chains", args.chains);
    if let Some(e) = args.eta {
        m.set("eta", e);
    }
    m.set("avs-eta", args.avs_eta);

    let report = run_study(&spec, &methods, &sampler)?;
    std::fs::create_dir_all(&args.out)?;
    let report_path = args.out.join("report.csv");
    let summary_path = args.out.join("summary.csv");
    report.write_csv(std::fs::File::create(&report_path)?)?;
    report.write_summary_csv(std::fs::File::create(&summary_path)?)?;
    m.output(&report_path);
    m.output(&summary_path);
    m.write_to(&args.out.join("manifest.txt"))?;
    eprintln!(
        "wrote {} rows to {}",
        report.rows.len(),
        report_path.display()
    );
    Ok(())
}

fn cmd_hub(args: HubArgs) -> Result<()> {
    let methods = parse_methods(&args.methods)?;
    let records = parse_hub_csv(&args.forecasts)?;
    let truth = parse_truth_csv(&args.truth)?;
    let gibbs = GibbsConfig {
        eta: args.eta,
        dirichlet_alpha: vec![1.0],
        chains: args.chains,
        draws_per_chain: args.draws,
        burn_in: args.burn_in,
        seed: args.seed,
        step_scale: 0.5,
    };
    let opts = HubPipelineConfig {
        discount: args.discount,
        horizon: args.horizon,
        mc_draws: args.mc_draws,
        avs_eta: args.avs_eta,
        ..Default::default()
    };
    let report = run_hub_pipeline(&records, &truth, &gibbs, &methods, &opts)?;
    std::fs::create_dir_all(&args.out)?;
    let mut m = Manifest::new("hub");
    m.set("forecasts", args.forecasts.display());
    m.set("truth", args.truth.display());
    m.set("methods", &args.methods);
    m.set("eta", args.eta);
    m.set("discount", args.discount);
    m.set("horizon", args.horizon);
    m.set("mc-draws", args.mc_draws);
    m.set("avs-eta", args.avs_eta);
    m.set("draws", args.draws);
    m.set("burn-in", args.burn_in);
    m.set("chains", args.chains);
    m.set("seed", args.seed);
    let outputs: Vec<(&str, Box<dyn Fn(std::fs::File) -> Result<()>>)> = vec![
        ("scores.csv", Box::new(|f| report.write_scores_csv(f))),
        ("weights.csv", Box::new(|f| report.write_weights_csv(f))),
        ("location_means.csv", Box::new(|f| report.write_location_means_csv(f))),
        ("week_means.csv", Box::new(|f| report.write_week_means_csv(f))),
        ("rank_counts.csv", Box::new(|f| report.write_rank_counts_csv(f))),
    ];
    for (name, write) in outputs {
        let path = args.out.join(name);
        write(std::fs::File::create(&path)?)?;
        m.output(&path);
    }
    let notices_path = args.out.join("notices.txt");
    std::fs::write(&notices_path, report.notices.join("\n") + "\n")?;
    m.output(&notices_path);
    m.write_to(&args.out.join("manifest.txt"))?;
    for n in &report.notices {
        eprintln!("note: {n}");
    }
    eprintln!("scored {} location-weeks", report.scores.len());
    Ok(())
}

fn cmd_diagnose(args: DiagnoseArgs) -> Result<()> {
    let draws = if let Some(path) = &args.draws_csv {
        read_draws_csv(path)?
    } else {
        let forecasts = args
            .forecasts
            .as_ref()
            .ok_or_else(|| Error::invalid("diagnose needs --draws-csv or hub inputs"))?;
        let truth_path = args
            .truth
            .as_ref()
            .ok_or_else(|| Error::invalid("--forecasts requires --truth"))?;
        let location = args
            .location
            .as_ref()
            .ok_or_else(|| Error::invalid("--forecasts requires --location"))?;
        let records = parse_hub_csv(forecasts)?;
        let truth = parse_truth_csv(truth_path)?;
        let gibbs = GibbsConfig {
            eta: args.eta,
            dirichlet_alpha: vec![1.0],
            chains: args.chains,
            draws_per_chain: args.draws,
            burn_in: args.burn_in,
            seed: args.seed,
            step_scale: 0.5,
        };
        let opts = HubPipelineConfig {
            discount: args.discount,
            mc_draws: args.mc_draws,
            ..Default::default()
        };
        fit_latest_posterior(&records, &truth, &gibbs, &opts, location, false)?.1
    };
    let diag = diagnostics(&draws)?;
    println!("coordinate,rhat,ess");
    for (c, (r, e)) in diag.rhat.iter().zip(&diag.ess).enumerate() {
        println!("{c},{r},{e}");
    }
    let max_rhat = diag.rhat.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_ess = diag.ess.iter().cloned().fold(f64::INFINITY, f64::min);
    eprintln!(
        "chains: {}, draws/chain: {}, max rhat: {max_rhat:.6}, min ess: {min_ess:.1}",
        draws.n_chains(),
        draws.per_chain_len()
    );
    if diag.accept_rate.is_finite() {
        eprintln!("accept rate: {:.3}", diag.accept_rate);
    }
    Ok(())
}

fn cmd_tune_eta(args: TuneEtaArgs) -> Result<()> {
    let grid: Vec<f64> = parse_list(&args.grid, "eta")?;
    let cfg = GibbsConfig {
        eta: 1.0,
        dirichlet_alpha: Vec::new(), // sized below
        chains: args.chains,
        draws_per_chain: args.draws,
        burn_in: args.burn_in,
        seed: args.seed,
        step_scale: 0.5,
    };
    let ctx: RiskContext = match (&args.study, &args.forecasts) {
        (Some(StudyArg::Iid), None) => {
            let study = IidStudyConfig {
                seed: args.seed,
                ..Default::default()
            };
            let mut rng = derived_rng(args.seed, "tune-eta-data", 0);
            let ys = gen_iid_mixture(&study, args.n, &mut rng);
            let comps: Vec<ComponentForecast> = study
                .candidate_means
                .iter()
                .map(|&mu| ComponentForecast::gaussian(mu, study.candidate_sd))
                .collect::<Result<_>>()?;
            RiskContext::iid(comps, ys, ScoreBackend::ClosedFormNormalMixture)?
        }
        (None, Some(forecasts)) => {
            let truth_path = args
                .truth
                .as_ref()
                .ok_or_else(|| Error::invalid("--forecasts requires --truth"))?;
            let location = args
                .location
                .as_ref()
                .ok_or_else(|| Error::invalid("--forecasts requires --location"))?;
            let records = parse_hub_csv(forecasts)?;
            let truth = parse_truth_csv(truth_path)?;
            let opts = HubPipelineConfig {
                discount: args.discount,
                mc_draws: args.mc_draws,
                ..Default::default()
            };
            latest_risk_context(&records, &truth, args.seed, &opts, location)?
        }
        (Some(s), None) => {
            return Err(Error::invalid(format!(
                "tune-eta supports --study iid, not {s:?}"
            )))
        }
        (None, None) => {
            return Err(Error::invalid(
                "tune-eta needs --study iid or --forecasts/--truth/--location",
            ))
        }
        (Some(_), Some(_)) => {
            return Err(Error::invalid("pass either --study or --forecasts, not both"))
        }
    };
    let cfg = GibbsConfig {
        dirichlet_alpha: vec![1.0; ctx.n_components()],
        ..cfg
    };
    let eta = tune_eta(&ctx, &grid, args.folds, &cfg)?;
    println!("{eta}");
    eprintln!(
        "selected eta over grid {:?} with {} folds on {} observations",
        grid,
        args.folds,
        ctx.n_obs()
    );
    Ok(())
}

fn cmd_gen_hub(args: GenHubArgs) -> Result<()> {
    let cfg = SyntheticHubConfig {
        teams: args.teams,
        good_teams: args.good_teams,
        locations: args.locations,
        weeks: args.weeks,
        base_level: args.base_level,
        start_date: args.start_date.clone(),
        seed: args.seed,
    };
    let (records, truth) = gen_synthetic_hub(&cfg)?;
    std::fs::create_dir_all(&args.out)?;
    let forecasts_path = args.out.join("forecasts.csv");
    let truth_path = args.out.join("truth.csv");
    {
        let mut w = csv::Writer::from_path(&forecasts_path)?;
        for r in &records {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    {
        let mut w = csv::Writer::from_path(&truth_path)?;
        for t in &truth {
            w.serialize(t)?;
        }
        w.flush()?;
    }
    let mut m = Manifest::new("gen-hub");
    m.set("teams", args.teams);
    m.set("good-teams", args.good_teams);
    m.set("locations", args.locations);
    m.set("weeks", args.weeks);
    m.set("base-level", args.base_level);
    m.set("start-date", &args.start_date);
    m.set("seed", args.seed);
    m.output(&forecasts_path);
    m.output(&truth_path);
    m.write_to(&args.out.join("manifest.txt"))?;
    eprintln!(
        "wrote {} forecast rows and {} truth rows to {}",
        records.len(),
        truth.len(),
        args.out.display()
    );
    Ok(())
}
