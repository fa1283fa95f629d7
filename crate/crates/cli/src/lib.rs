//! Command surface: `simulate`, `fit`, `smooth`, `forecast`, `ppc` and
//! `report`.
//!
//! Every command writes its outputs plus `manifest_<command>.json` into
//! `--out-dir`. Randomness comes from `--seed` alone:
//!
//! | command | stream |
//! |---|---|
//! | `simulate` | weather ChaCha8 seed `2s + 1`, states and demand seed `2s` |
//! | `fit` | chain `c` uses ChaCha8 seed `s`, stream `c + 1` |
//! | `ppc`, `report` | replicate `i` uses ChaCha8 seed `s`, stream `i` |
//! | `forecast` | path `i` uses ChaCha8 seed `s`, stream `i` |
//!
//! Exit codes: 0 success, 2 input error, 3 numerical failure, 4 R-hat above
//! the threshold with `fit --strict`. Failures print one JSON object on
//! stderr.

pub mod commands;
pub mod error;
pub mod manifest;
pub mod report;

use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use gasnhmm::state_model::ModelMode;

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "gasnhmm", version, about = "Holiday-aware hidden Markov model for daily gas demand")]
pub struct Cli {
    /// More log output on stderr (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a synthetic dataset from the built-in recovery parameters.
    Simulate(SimulateArgs),
    /// Sample the posterior.
    Fit(FitArgs),
    /// Rao-Blackwellised smoothed state probabilities.
    Smooth(DrawsArgs),
    /// Predictive paths beyond the last observed day.
    Forecast(ForecastArgs),
    /// Posterior predictive coverage by distance to the nearest holiday.
    Ppc(DrawsArgs),
    /// Plot-ready tables: state timeline, parameter densities, PPC scatter.
    Report(DrawsArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Configuration file; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Demand and weather CSV: `date,y1,y2,w1,w2`, raw demand.
    #[arg(long)]
    pub data: PathBuf,
    /// Holiday CSV: `date,type`.
    #[arg(long)]
    pub holidays: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Calendar to simulate under; a UK-style calendar when omitted.
    #[arg(long)]
    pub holidays: Option<PathBuf>,
    #[arg(long, default_value = "2015-01-05")]
    pub start: NaiveDate,
    #[arg(long, default_value_t = 1500)]
    pub days: u64,
    #[arg(long, default_value = "four_state", value_parser = parse_mode)]
    pub mode: ModelMode,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub input: DataArgs,
    #[arg(long, default_value = "four_state", value_parser = parse_mode)]
    pub mode: ModelMode,
    #[arg(long)]
    pub chains: Option<usize>,
    /// Iterations per chain, burn-in included.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Exit with code 4 when any split R-hat exceeds the threshold.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Args)]
pub struct DrawsArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub input: DataArgs,
    /// Draws CSV from `fit`; defaults to `<out-dir>/draws.csv`.
    #[arg(long)]
    pub draws: Option<PathBuf>,
    /// Mode the draws were fitted under; read from the neighbouring
    /// `diagnostics.json` when omitted.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<ModelMode>,
}

#[derive(Debug, Clone, Args)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub draws: DrawsArgs,
    #[arg(long)]
    pub horizon: usize,
    /// Weather scenario CSV `date,w1,w2` starting the day after the data.
    #[arg(long)]
    pub future_cwv: PathBuf,
}

fn parse_mode(s: &str) -> Result<ModelMode, String> {
    ModelMode::parse(s).ok_or_else(|| format!("unknown mode `{s}` (four_state or two_state)"))
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(a) => commands::simulate(a).map(drop),
        Command::Fit(a) => commands::fit(a).map(drop),
        Command::Smooth(a) => commands::smooth(a).map(drop),
        Command::Forecast(a) => commands::forecast(a).map(drop),
        Command::Ppc(a) => commands::ppc(a).map(drop),
        Command::Report(a) => report::report(a).map(drop),
    }
}
