//! Plot-ready tables. Nothing here draws; every file is a flat CSV.
//!
//! * `report_states.csv`: per day, holiday flag, gap, smoothed state
//!   probabilities and the pointwise modal state.
//! * `report_parameters.csv`: posterior summaries with split R-hat and ESS.
//! * `report_densities.csv`: histogram density of every parameter.
//! * `report_ppc_days.csv`, `report_ppc.json`: observed against predictive
//!   bands, and the exceedance table by gap.

use std::path::{Path, PathBuf};

use gasnhmm::diagnostics::diagnostics;
use gasnhmm::ppc::quantile;
use gasnhmm::sampler::PosteriorDraws;
use gasnhmm::Smoothed;

use crate::commands::{draws_manifest, load_draws, ppc_summary, smoothed_states, write_ppc, Inputs};
use crate::error::CliResult;
use crate::DrawsArgs;

pub const HISTOGRAM_BINS: usize = 40;

fn num(v: f64) -> String {
    v.to_string()
}

pub fn write_states(path: &Path, inputs: &Inputs, sm: &Smoothed) -> CliResult<()> {
    let modes = sm.modes();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", "holiday", "gap", "p_state1", "p_state2", "p_state3", "p_state4", "mode_state"])?;
    for (t, day) in inputs.cov.days.iter().enumerate() {
        let p = sm.probs[t + 1];
        let mut rec = vec![day.date.to_string(), (day.is_holiday() as u8).to_string(), day.gap().to_string()];
        rec.extend(p.iter().map(|&v| num(v)));
        rec.push((modes[t + 1] + 1).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean, sd and quantiles of one sorted column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnSummary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub q975: f64,
}

pub fn summarise(sorted: &[f64]) -> ColumnSummary {
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = if sorted.len() > 1 { sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    ColumnSummary {
        mean,
        sd: var.sqrt(),
        q025: quantile(sorted, 0.025),
        q05: quantile(sorted, 0.05),
        q50: quantile(sorted, 0.5),
        q95: quantile(sorted, 0.95),
        q975: quantile(sorted, 0.975),
    }
}

/// Equal-width histogram normalised to integrate to one. A constant column
/// gets a single unit-width bin.
pub fn histogram(sorted: &[f64], bins: usize) -> Vec<(f64, f64, f64)> {
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if !(hi > lo) {
        return vec![(lo - 0.5, lo + 0.5, 1.0)];
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in sorted {
        let k = (((x - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let n = sorted.len() as f64;
    counts
        .iter()
        .enumerate()
        .map(|(k, &c)| (lo + k as f64 * width, lo + (k + 1) as f64 * width, c as f64 / (n * width)))
        .collect()
}

pub fn write_parameters(params_path: &Path, densities_path: &Path, draws: &PosteriorDraws) -> CliResult<()> {
    let diag = diagnostics(&draws.names, &draws.by_chain());
    let mut wp = csv::Writer::from_path(params_path)?;
    wp.write_record(["name", "mean", "sd", "q025", "q05", "q50", "q95", "q975", "rhat", "ess"])?;
    let mut wd = csv::Writer::from_path(densities_path)?;
    wd.write_record(["name", "bin_lo", "bin_hi", "density"])?;
    for (p, name) in draws.names.iter().enumerate() {
        let mut col = draws.column(p);
        col.sort_by(f64::total_cmp);
        let s = summarise(&col);
        wp.write_record([
            name.clone(),
            num(s.mean),
            num(s.sd),
            num(s.q025),
            num(s.q05),
            num(s.q50),
            num(s.q95),
            num(s.q975),
            diag.rhat[p].map(num).unwrap_or_default(),
            num(diag.ess[p]),
        ])?;
        for (a, b, d) in histogram(&col, HISTOGRAM_BINS) {
            wd.write_record([name.clone(), num(a), num(b), num(d)])?;
        }
    }
    wp.flush()?;
    wd.flush()?;
    Ok(())
}

pub fn report(args: &DrawsArgs) -> CliResult<PathBuf> {
    let l = load_draws(args)?;
    std::fs::create_dir_all(&args.common.out_dir)?;
    let dir = args.common.out_dir.as_path();
    let states = dir.join("report_states.csv");
    write_states(&states, &l.inputs, &smoothed_states(&l)?)?;
    let params = dir.join("report_parameters.csv");
    let dens = dir.join("report_densities.csv");
    write_parameters(&params, &dens, &l.draws)?;
    let summary = ppc_summary(&l, args.common.seed)?;
    let (ppc_days, ppc_json) = write_ppc(dir, l.draws.mode, &summary, "report_")?;
    let mut m = draws_manifest("report", args, &l)?;
    for (role, p) in [("states", &states), ("parameters", &params), ("densities", &dens), ("ppc_days", &ppc_days), ("ppc", &ppc_json)] {
        m.output(role, p)?;
    }
    m.finish(dir)?;
    Ok(states)
}
