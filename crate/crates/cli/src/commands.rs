use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Days};
use gasnhmm::calendar::{build_covariates, build_covariates_with_epoch, smooth_cwv_baseline, CovariateSeries, HolidayCalendar};
use gasnhmm::config::{read_config, RunConfig};
use gasnhmm::generative::simulate as simulate_series;
use gasnhmm::inference::{rao_blackwell_states, FitData};
use gasnhmm::io::{self, DemandSeries};
use gasnhmm::ppc::{coverage_by_gap, forecast as forecast_paths, posterior_predictive_replicates, GapBucket, PpcSummary};
use gasnhmm::sampler::{run_mcmc, PosteriorDraws};
use gasnhmm::state_model::ModelMode;
use gasnhmm::synthetic::{recovery_truth, sinusoidal_cwv, uk_bank_holidays};
use gasnhmm::{Error, Params, Smoothed};
use serde::{Deserialize, Serialize};
use tracing::info;

use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::{Common, DataArgs, DrawsArgs, FitArgs, ForecastArgs, SimulateArgs};

pub const DRAWS_FILE: &str = "draws.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";

pub fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    let cfg = match path {
        Some(p) => read_config(p)?,
        None => RunConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(common: &Common) -> CliResult<&Path> {
    fs::create_dir_all(&common.out_dir)?;
    Ok(&common.out_dir)
}

/// Demand, calendar and covariates for one dataset.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub series: DemandSeries,
    pub calendar: HolidayCalendar,
    pub baseline: gasnhmm::calendar::SeasonalCwvBaseline,
    pub cov: CovariateSeries,
}

impl Inputs {
    pub fn fit_data(&self, mode: ModelMode, harmonics: usize) -> CliResult<FitData> {
        Ok(FitData::with_harmonics(self.series.log_demand(), self.cov.clone(), mode, harmonics)?)
    }
}

/// Reads demand and holidays; the CWV baseline is the smoothed seasonal
/// mean of the data's own weather.
pub fn load_inputs(args: &DataArgs, cwv_halfwidth: usize) -> CliResult<Inputs> {
    let series = io::read_demand(&args.data)?;
    let calendar = io::read_holidays(&args.holidays)?;
    let baseline = smooth_cwv_baseline(&series.dates, &series.cwv, cwv_halfwidth)?;
    let cov = build_covariates(&series.dates, &calendar, &series.cwv, &baseline)?;
    Ok(Inputs { series, calendar, baseline, cov })
}

fn record_inputs(m: &mut RunManifest, common: &Common, data: Option<&DataArgs>) -> CliResult<()> {
    if let Some(c) = &common.config {
        m.input("config", c)?;
    }
    if let Some(d) = data {
        m.input("data", &d.data)?;
        m.input("holidays", &d.holidays)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostic {
    pub name: String,
    pub rhat: Option<f64>,
    pub ess: f64,
}

/// Contents of `diagnostics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub mode: ModelMode,
    pub k_gamma: usize,
    pub k_kappa: usize,
    pub algorithm: String,
    pub chains: usize,
    pub iterations: usize,
    pub retained_draws: usize,
    pub max_rhat: Option<f64>,
    pub worst_parameter: Option<String>,
    pub min_ess: f64,
    pub rhat_threshold: f64,
    pub converged: bool,
    pub acceptance: Vec<f64>,
    pub divergences: Vec<usize>,
    pub step_size: Vec<f64>,
    pub parameters: Vec<ParamDiagnostic>,
}

#[derive(Debug)]
pub struct FitOutcome {
    pub draws_path: PathBuf,
    pub summary: FitSummary,
}

pub fn simulate(args: &SimulateArgs) -> CliResult<PathBuf> {
    let cfg = load_config(args.common.config.as_deref())?;
    let dir = out_dir(&args.common)?;
    if args.days == 0 {
        return Err(Error::InvalidInput("--days must be positive".into()).into());
    }
    let seed = args.common.seed;
    let dates: Vec<_> = (0..args.days).map(|i| args.start + Days::new(i)).collect();
    let last = *dates.last().expect("days > 0");
    let calendar = match &args.holidays {
        Some(p) => io::read_holidays(p)?,
        None => uk_bank_holidays(args.start.year() - 1, last.year() + 1)?,
    };
    let cwv = sinusoidal_cwv(&dates, seed.wrapping_mul(2).wrapping_add(1));
    let baseline = smooth_cwv_baseline(&dates, &cwv, cfg.cwv_halfwidth)?;
    let cov = build_covariates(&dates, &calendar, &cwv, &baseline)?;
    let truth = recovery_truth(cfg.hyper.k_gamma, cfg.hyper.k_kappa);
    let sim = simulate_series(&truth, &cov, args.mode, seed.wrapping_mul(2))?;
    let series = DemandSeries::from_log(dates.clone(), &sim.y, cwv);

    let data_path = dir.join("data.csv");
    let holidays_path = dir.join("holidays.csv");
    let states_path = dir.join("states.csv");
    let truth_path = dir.join("truth.json");
    io::write_demand(&data_path, &series)?;
    io::write_holidays(&holidays_path, &calendar)?;
    let mut w = csv::Writer::from_path(&states_path)?;
    w.write_record(["date", "state"])?;
    for (d, s) in dates.iter().zip(sim.observed_states()) {
        w.write_record([d.to_string(), (s + 1).to_string()])?;
    }
    w.flush()?;
    fs::write(&truth_path, serde_json::to_string_pretty(&truth)? + "\n")?;
    info!(days = args.days, "simulated");

    let mut m = RunManifest::new("simulate", seed, cfg.to_text());
    m.mode = Some(args.mode.as_str().into());
    record_inputs(&mut m, &args.common, None)?;
    if let Some(p) = &args.holidays {
        m.input("holidays", p)?;
    }
    for (role, p) in [("data", &data_path), ("holidays", &holidays_path), ("states", &states_path), ("truth", &truth_path)] {
        m.output(role, p)?;
    }
    m.finish(dir)?;
    Ok(data_path)
}

pub fn fit(args: &FitArgs) -> CliResult<FitOutcome> {
    let mut cfg = load_config(args.common.config.as_deref())?;
    if let Some(c) = args.chains {
        cfg.sampler.n_chains = c;
    }
    if let Some(i) = args.iters {
        cfg.sampler.n_iterations = i;
    }
    cfg.sampler.seed = args.common.seed;
    cfg.validate()?;
    let dir = out_dir(&args.common)?;
    let inputs = load_inputs(&args.input, cfg.cwv_halfwidth)?;
    let harmonics = cfg.hyper.k_gamma.max(cfg.hyper.k_kappa);
    let data = inputs.fit_data(args.mode, harmonics)?;
    info!(days = data.len(), mode = args.mode.as_str(), chains = cfg.sampler.n_chains, iterations = cfg.sampler.n_iterations, "fitting");
    let (draws, diag) = run_mcmc(&data, &cfg.hyper, &cfg.sampler)?;

    let draws_path = dir.join(DRAWS_FILE);
    io::write_draws(&draws_path, &draws)?;
    let max_rhat = diag.max_rhat();
    let worst = diag
        .rhat
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.map(|r| (i, r)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| diag.names[i].clone());
    let summary = FitSummary {
        mode: args.mode,
        k_gamma: cfg.hyper.k_gamma,
        k_kappa: cfg.hyper.k_kappa,
        algorithm: cfg.sampler.algorithm.as_str().into(),
        chains: cfg.sampler.n_chains,
        iterations: cfg.sampler.n_iterations,
        retained_draws: draws.len(),
        max_rhat,
        worst_parameter: worst.clone(),
        min_ess: diag.min_ess(),
        rhat_threshold: cfg.rhat_threshold,
        converged: max_rhat.is_none_or(|r| r < cfg.rhat_threshold),
        acceptance: diag.acceptance.clone(),
        divergences: diag.divergences.clone(),
        step_size: diag.step_size.clone(),
        parameters: diag
            .names
            .iter()
            .zip(diag.rhat.iter().zip(&diag.ess))
            .map(|(n, (r, e))| ParamDiagnostic { name: n.clone(), rhat: *r, ess: *e })
            .collect(),
    };
    let diag_path = dir.join(DIAGNOSTICS_FILE);
    fs::write(&diag_path, serde_json::to_string_pretty(&summary)? + "\n")?;
    info!(max_rhat = ?summary.max_rhat, min_ess = summary.min_ess, "fit finished");

    let mut m = RunManifest::new("fit", args.common.seed, cfg.to_text());
    m.mode = Some(args.mode.as_str().into());
    record_inputs(&mut m, &args.common, Some(&args.input))?;
    m.output("draws", &draws_path)?;
    m.output("diagnostics", &diag_path)?;
    m.finish(dir)?;

    if args.strict && !summary.converged {
        return Err(CliError::NotConverged {
            name: worst.unwrap_or_default(),
            rhat: max_rhat.unwrap_or(f64::NAN),
            threshold: cfg.rhat_threshold,
        });
    }
    Ok(FitOutcome { draws_path, summary })
}

/// Mode recorded next to a draws file, if any.
pub fn recorded_mode(draws_path: &Path) -> CliResult<Option<ModelMode>> {
    let p = draws_path.with_file_name(DIAGNOSTICS_FILE);
    if !p.exists() {
        return Ok(None);
    }
    let s: FitSummary = serde_json::from_str(&fs::read_to_string(&p)?)?;
    Ok(Some(s.mode))
}

/// Draws, their mode and the inputs they are evaluated against.
pub struct Loaded {
    pub cfg: RunConfig,
    pub draws_path: PathBuf,
    pub draws: PosteriorDraws,
    pub inputs: Inputs,
    pub data: FitData,
}

pub fn load_draws(args: &DrawsArgs) -> CliResult<Loaded> {
    let cfg = load_config(args.common.config.as_deref())?;
    let draws_path = args.draws.clone().unwrap_or_else(|| args.common.out_dir.join(DRAWS_FILE));
    let mode = match (args.mode, recorded_mode(&draws_path)?) {
        (Some(asked), Some(fitted)) if asked != fitted => {
            return Err(Error::InvalidInput(format!(
                "{} holds {} draws but {} was requested",
                draws_path.display(),
                fitted.as_str(),
                asked.as_str()
            ))
            .into())
        }
        (Some(m), _) | (None, Some(m)) => m,
        (None, None) => ModelMode::FourState,
    };
    let draws = io::read_draws(&draws_path, mode)?;
    if draws.is_empty() {
        return Err(Error::InvalidInput(format!("{} holds no draws", draws_path.display())).into());
    }
    let inputs = load_inputs(&args.input, cfg.cwv_halfwidth)?;
    let data = inputs.fit_data(mode, draws.k_gamma.max(draws.k_kappa))?;
    Ok(Loaded { cfg, draws_path, draws, inputs, data })
}

pub fn draws_manifest(command: &str, args: &DrawsArgs, l: &Loaded) -> CliResult<RunManifest> {
    let mut m = RunManifest::new(command, args.common.seed, l.cfg.to_text());
    m.mode = Some(l.draws.mode.as_str().into());
    record_inputs(&mut m, &args.common, Some(&args.input))?;
    m.input("draws", &l.draws_path)?;
    Ok(m)
}

/// `n` draws evenly spread over the retained set; all of them when `n` is
/// zero or at least the number available.
pub fn select_draws(all: Vec<Params>, n: usize) -> Vec<Params> {
    if n == 0 || n >= all.len() {
        return all;
    }
    let len = all.len();
    (0..n).map(|i| all[i * len / n].clone()).collect()
}

pub fn smoothed_states(l: &Loaded) -> CliResult<Smoothed> {
    Ok(rao_blackwell_states(&l.draws.all_params(), &l.data)?)
}

pub fn smooth(args: &DrawsArgs) -> CliResult<PathBuf> {
    let l = load_draws(args)?;
    let dir = out_dir(&args.common)?;
    let sm = smoothed_states(&l)?;
    let path = dir.join("smoothed.csv");
    io::write_smoothed(&path, &l.inputs.series.dates, &sm.probs)?;
    let mut m = draws_manifest("smooth", args, &l)?;
    m.output("smoothed", &path)?;
    m.finish(dir)?;
    Ok(path)
}

/// Contents of `ppc.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpcReport {
    pub mode: ModelMode,
    pub replicates: usize,
    pub buckets: Vec<GapBucket>,
}

pub fn ppc_summary(l: &Loaded, seed: u64) -> CliResult<PpcSummary> {
    let params = select_draws(l.draws.all_params(), l.cfg.replicates);
    let reps = posterior_predictive_replicates(&params, l.draws.mode, &l.data, seed)?;
    Ok(coverage_by_gap(&reps, &l.data)?)
}

pub fn write_ppc(dir: &Path, mode: ModelMode, summary: &PpcSummary, prefix: &str) -> CliResult<(PathBuf, PathBuf)> {
    let days = dir.join(format!("{prefix}ppc_days.csv"));
    io::write_ppc_days(&days, summary)?;
    let json_path = dir.join(format!("{prefix}ppc.json"));
    let r = PpcReport { mode, replicates: summary.replicates, buckets: summary.buckets.clone() };
    fs::write(&json_path, serde_json::to_string_pretty(&r)? + "\n")?;
    Ok((days, json_path))
}

pub fn ppc(args: &DrawsArgs) -> CliResult<PathBuf> {
    let l = load_draws(args)?;
    let dir = out_dir(&args.common)?;
    let summary = ppc_summary(&l, args.common.seed)?;
    let (days, json_path) = write_ppc(dir, l.draws.mode, &summary, "")?;
    let mut m = draws_manifest("ppc", args, &l)?;
    m.output("ppc_days", &days)?;
    m.output("ppc", &json_path)?;
    m.finish(dir)?;
    Ok(json_path)
}

pub fn forecast(args: &ForecastArgs) -> CliResult<PathBuf> {
    let d = &args.draws;
    let l = load_draws(d)?;
    let dir = out_dir(&d.common)?;
    if args.horizon == 0 {
        return Err(Error::InvalidInput("--horizon must be positive".into()).into());
    }
    let (dates, cwv) = io::read_cwv(&args.future_cwv)?;
    if dates.len() < args.horizon {
        return Err(Error::InvalidInput(format!(
            "{} covers {} days but the horizon is {}",
            args.future_cwv.display(),
            dates.len(),
            args.horizon
        ))
        .into());
    }
    let h = args.horizon;
    let epoch = l.inputs.series.dates[0];
    let future = build_covariates_with_epoch(&dates[..h], &l.inputs.calendar, &cwv[..h], &l.inputs.baseline, epoch)?;
    let params = select_draws(l.draws.all_params(), l.cfg.replicates);
    let f = forecast_paths(&params, &l.data, &future, d.common.seed)?;
    let path = dir.join("forecast.csv");
    io::write_forecast(&path, &f)?;
    let mut m = draws_manifest("forecast", d, &l)?;
    m.input("future_cwv", &args.future_cwv)?;
    m.output("forecast", &path)?;
    m.finish(dir)?;
    Ok(path)
}
