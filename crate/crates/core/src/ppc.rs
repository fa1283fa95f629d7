//! Posterior predictive replication, coverage by distance to the nearest
//! holiday, and multi-day forecasts.

use chrono::NaiveDate;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::CovariateSeries;
use crate::emission::{mean_base, mean_from_base, DayDesign};
use crate::error::{Error, Result};
use crate::generative::{simulate_path, Start};
use crate::inference::{smooth, FitData};
use crate::params::ModelParams;
use crate::state_model::ModelMode;

/// Smallest replicate count for which the 2.5% and 97.5% points are used.
pub const MIN_REPLICATES: usize = 40;

/// Gaps at or above this value share one bucket.
pub const GAP_CAP: u32 = 10;

fn draw_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

/// One replicated series per parameter draw, simulated over the covariates
/// of `data` from the initial state law. `draws_mode` is the mode the draws
/// were fitted under and must match `data.mode`.
pub fn posterior_predictive_replicates(
    draws: &[ModelParams<f64>],
    draws_mode: ModelMode,
    data: &FitData,
    seed: u64,
) -> Result<Vec<Vec<[f64; 2]>>> {
    if draws_mode != data.mode {
        return Err(Error::InvalidInput(format!(
            "draws were fitted under {} but replicates were requested under {}",
            draws_mode.as_str(),
            data.mode.as_str()
        )));
    }
    let start = Start::Stationary { day0_n: data.cov.day0.n, day0_p: data.cov.day0.p };
    draws
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = draw_rng(seed, i);
            simulate_path(p, &data.cov.days, &data.design, data.mode, start, &mut rng).map(|(_, y)| y)
        })
        .collect()
}

/// Empirical quantile with linear interpolation between order statistics.
/// `sorted` must be ascending and non-empty.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Predictive mean and central 95% interval of one day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveBand {
    pub mean: [f64; 2],
    pub q025: [f64; 2],
    pub q975: [f64; 2],
}

/// Per-day bands of a set of equally long series.
pub fn predictive_bands(series: &[Vec<[f64; 2]>]) -> Result<Vec<PredictiveBand>> {
    let first = series.first().ok_or_else(|| Error::InvalidInput("no series to summarise".into()))?;
    let t_len = first.len();
    if series.iter().any(|s| s.len() != t_len) {
        return Err(Error::InvalidInput("series differ in length".into()));
    }
    let n = series.len() as f64;
    let mut col = vec![0.0; series.len()];
    let mut out = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut band = PredictiveBand { mean: [0.0; 2], q025: [0.0; 2], q975: [0.0; 2] };
        for j in 0..2 {
            for (c, s) in col.iter_mut().zip(series) {
                *c = s[t][j];
            }
            col.sort_by(f64::total_cmp);
            band.mean[j] = col.iter().sum::<f64>() / n;
            band.q025[j] = quantile(&col, 0.025);
            band.q975[j] = quantile(&col, 0.975);
        }
        out.push(band);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapBucket {
    /// `min(n, p)`; the last bucket holds every gap of at least [`GAP_CAP`].
    pub gap: u32,
    pub open_ended: bool,
    pub days: usize,
    pub outside: [usize; 2],
    pub fraction_outside: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpcDay {
    pub date: NaiveDate,
    pub gap: u32,
    pub observed: [f64; 2],
    pub band: PredictiveBand,
    pub outside: [bool; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpcSummary {
    pub replicates: usize,
    pub buckets: Vec<GapBucket>,
    pub days: Vec<PpcDay>,
}

impl PpcSummary {
    pub fn bucket(&self, gap: u32) -> Option<&GapBucket> {
        self.buckets.iter().find(|b| b.gap == gap.min(GAP_CAP))
    }
}

/// Compares each observation with the central 95% interval of its
/// replicates and tabulates the exceedance rate by gap and region.
pub fn coverage_by_gap(replicates: &[Vec<[f64; 2]>], data: &FitData) -> Result<PpcSummary> {
    if replicates.len() < MIN_REPLICATES {
        return Err(Error::InvalidInput(format!(
            "{} replicates given; at least {MIN_REPLICATES} are needed for 95% intervals",
            replicates.len()
        )));
    }
    if replicates.iter().any(|r| r.len() != data.len()) {
        return Err(Error::InvalidInput("replicates are not aligned with the data".into()));
    }
    let bands = predictive_bands(replicates)?;
    let mut buckets: Vec<GapBucket> = (0..=GAP_CAP)
        .map(|g| GapBucket { gap: g, open_ended: g == GAP_CAP, days: 0, outside: [0; 2], fraction_outside: [0.0; 2] })
        .collect();
    let mut days = Vec::with_capacity(data.len());
    for ((day, y), band) in data.cov.days.iter().zip(&data.y).zip(bands) {
        let gap = day.gap();
        let outside = [0, 1].map(|j| y[j] < band.q025[j] || y[j] > band.q975[j]);
        let b = &mut buckets[gap.min(GAP_CAP) as usize];
        b.days += 1;
        for j in 0..2 {
            b.outside[j] += outside[j] as usize;
        }
        days.push(PpcDay { date: day.date, gap, observed: *y, band, outside });
    }
    buckets.retain(|b| b.days > 0);
    for b in buckets.iter_mut() {
        for j in 0..2 {
            b.fraction_outside[j] = b.outside[j] as f64 / b.days as f64;
        }
    }
    Ok(PpcSummary { replicates: replicates.len(), buckets, days })
}

/// Forecast paths, one per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub dates: Vec<NaiveDate>,
    /// State on the last observed day, per draw.
    pub last_state: Vec<usize>,
    pub states: Vec<Vec<usize>>,
    pub paths: Vec<Vec<[f64; 2]>>,
}

impl Forecast {
    pub fn bands(&self) -> Result<Vec<PredictiveBand>> {
        predictive_bands(&self.paths)
    }
}

/// For each draw, samples the state of the last observed day from its
/// smoothed distribution and rolls states and demand forward over
/// `future`, which must start the day after the data ends and share its
/// epoch.
pub fn forecast(draws: &[ModelParams<f64>], data: &FitData, future: &CovariateSeries, seed: u64) -> Result<Forecast> {
    if draws.is_empty() {
        return Err(Error::InvalidInput("at least one draw is required".into()));
    }
    let last = data.cov.days.last().expect("fit data is non-empty");
    let first = future.days.first().ok_or_else(|| Error::InvalidInput("empty forecast horizon".into()))?;
    if first.date != last.date + chrono::Days::new(1) || first.t_index != last.t_index + 1 {
        return Err(Error::InvalidInput(format!(
            "forecast must start on {} (day {} of the series)",
            last.date + chrono::Days::new(1),
            last.t_index + 1
        )));
    }
    let harmonics = data.design[0].annual_cos.len();
    let design: Vec<DayDesign> = future.days.iter().map(|d| DayDesign::new(d.t_index, harmonics)).collect();
    let y_last = *data.y.last().expect("fit data is non-empty");
    let last_design = data.design.last().expect("fit data is non-empty");
    let out: Vec<(usize, Vec<usize>, Vec<[f64; 2]>)> = draws
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = draw_rng(seed, i);
            let probs = *smooth(data, p)?.probs.last().expect("smoothing covers the last day");
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut s_last = 0;
            for (k, &pk) in probs.iter().enumerate() {
                if pk > 0.0 {
                    acc += pk;
                    s_last = k;
                    if u < acc {
                        break;
                    }
                }
            }
            let mu = mean_from_base(&p.emission, mean_base(&p.emission, last, last_design), last, s_last);
            let start = Start::After { state: s_last, y: y_last, mu };
            let (states, y) = simulate_path(p, &future.days, &design, data.mode, start, &mut rng)?;
            Ok((s_last, states[1..].to_vec(), y))
        })
        .collect::<Result<_>>()?;
    let mut f = Forecast { dates: future.dates(), last_state: Vec::new(), states: Vec::new(), paths: Vec::new() };
    for (s, st, y) in out {
        f.last_state.push(s);
        f.states.push(st);
        f.paths.push(y);
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::build_covariates_with_epoch;
    use crate::emission::psi_from_xi;
    use crate::state_model::{transition_matrix_for, HOLIDAY};
    use crate::synthetic::{recovery_truth, scenario, Scenario};
    use chrono::Days;

    fn start() -> NaiveDate {
        NaiveDate::from_ymd_opt(2015, 1, 5).unwrap()
    }

    fn calibrated(days: u64, seed: u64) -> (Scenario, FitData) {
        let mut truth = recovery_truth(2, 2);
        truth.emission.xi = [0.3, 0.2];
        let sc = scenario(start(), days, truth, ModelMode::FourState, seed).unwrap();
        let data = FitData::with_harmonics(sc.sim.y.clone(), sc.cov.clone(), ModelMode::FourState, 2).unwrap();
        (sc, data)
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 5.0);
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert!((quantile(&v, 0.1) - 1.4).abs() < 1e-12);
    }

    #[test]
    fn replicate_shapes_and_mode_check() {
        let (sc, data) = calibrated(200, 1);
        let draws = vec![sc.truth.clone(); 3];
        let reps = posterior_predictive_replicates(&draws, ModelMode::FourState, &data, 0).unwrap();
        assert_eq!(reps.len(), 3);
        assert!(reps.iter().all(|r| r.len() == data.len()));
        assert!(posterior_predictive_replicates(&draws, ModelMode::TwoState, &data, 0).is_err());
    }

    #[test]
    fn holiday_replicate_mean_matches_state_mean() {
        let (sc, data) = calibrated(400, 2);
        let draws = vec![sc.truth.clone(); 4000];
        let reps = posterior_predictive_replicates(&draws, ModelMode::FourState, &data, 3).unwrap();
        let bands = predictive_bands(&reps).unwrap();
        let e = &sc.truth.emission;
        let mut checked = 0;
        for (t, day) in data.cov.days.iter().enumerate().filter(|(_, d)| d.is_holiday()) {
            let mu = mean_from_base(e, mean_base(e, day, &data.design[t]), day, HOLIDAY);
            let sd: Vec<f64> = (0..2).map(|j| {
                let m = bands[t].mean[j];
                (reps.iter().map(|r| (r[t][j] - m).powi(2)).sum::<f64>() / reps.len() as f64).sqrt()
            }).collect();
            for j in 0..2 {
                let se = sd[j] / (reps.len() as f64).sqrt();
                assert!((bands[t].mean[j] - mu[j]).abs() < 4.0 * se, "day {t} region {j}");
            }
            checked += 1;
        }
        assert!(checked >= 8);
    }

    #[test]
    fn calibrated_replicates_exceed_about_five_percent() {
        let (sc, data) = calibrated(3000, 4);
        let draws = vec![sc.truth.clone(); 400];
        let reps = posterior_predictive_replicates(&draws, ModelMode::FourState, &data, 5).unwrap();
        let summary = coverage_by_gap(&reps, &data).unwrap();
        for b in &summary.buckets {
            for j in 0..2 {
                assert!((0.0..=1.0).contains(&b.fraction_outside[j]));
                let se = (0.05 * 0.95 / b.days as f64).sqrt();
                assert!((b.fraction_outside[j] - 0.05).abs() <= 3.0 * se + 1e-9, "gap {} region {j}: {} of {}", b.gap, b.fraction_outside[j], b.days);
            }
        }
        for d in &summary.days {
            assert!(d.band.q025[0] <= d.band.q975[0] && d.band.q025[1] <= d.band.q975[1]);
        }
        let shifted = FitData { y: data.y.iter().map(|v| [v[0] + 10.0, v[1] + 10.0]).collect(), ..data.clone() };
        let off = coverage_by_gap(&reps, &shifted).unwrap();
        assert!(off.buckets.iter().all(|b| b.fraction_outside == [1.0, 1.0]));
    }

    #[test]
    fn coverage_needs_enough_replicates_and_ignores_order() {
        let (sc, data) = calibrated(300, 6);
        let draws = vec![sc.truth.clone(); 60];
        let mut reps = posterior_predictive_replicates(&draws, ModelMode::FourState, &data, 7).unwrap();
        assert!(coverage_by_gap(&reps[..39], &data).is_err());
        let a = coverage_by_gap(&reps, &data).unwrap();
        reps.reverse();
        reps.swap(3, 17);
        let b = coverage_by_gap(&reps, &data).unwrap();
        assert_eq!(a.buckets, b.buckets);
    }

    fn future(sc: &Scenario, h: u64) -> CovariateSeries {
        let last = *sc.dates.last().unwrap();
        let dates: Vec<NaiveDate> = (1..=h).map(|i| last + Days::new(i)).collect();
        let cwv = vec![[0.0, 0.0]; dates.len()];
        build_covariates_with_epoch(&dates, &sc.calendar, &cwv, &sc.baseline, sc.dates[0]).unwrap()
    }

    #[test]
    fn one_step_forecast_matches_mixture_mean() {
        let (sc, data) = calibrated(300, 8);
        let p = &sc.truth;
        let fut = future(&sc, 1);
        let draws = vec![p.clone(); 20_000];
        let f = forecast(&draws, &data, &fut, 9).unwrap();
        let probs = *smooth(&data, p).unwrap().probs.last().unwrap();
        let e = &p.emission;
        let (last, ld) = (data.cov.days.last().unwrap(), data.design.last().unwrap());
        let next = &fut.days[0];
        let nd = DayDesign::new(next.t_index, 2);
        let psi = psi_from_xi(e.xi).unwrap();
        let y_last = data.y.last().unwrap();
        let mut expect = [0.0; 2];
        for s in 0..4 {
            if probs[s] == 0.0 {
                continue;
            }
            let mu_s = mean_from_base(e, mean_base(e, last, ld), last, s);
            let dev = [y_last[0] - mu_s[0], y_last[1] - mu_s[1]];
            let m = transition_matrix_for(&p.transition, next.n, next.p, ModelMode::FourState);
            for s2 in 0..4 {
                let w = probs[s] * m[s][s2];
                if w == 0.0 {
                    continue;
                }
                let mu2 = mean_from_base(e, mean_base(e, next, &nd), next, s2);
                for j in 0..2 {
                    expect[j] += w * (mu2[j] + psi[j][0] * dev[0] + psi[j][1] * dev[1]);
                }
            }
        }
        let band = f.bands().unwrap()[0];
        for j in 0..2 {
            let sd = (f.paths.iter().map(|y| (y[0][j] - band.mean[j]).powi(2)).sum::<f64>() / 20_000.0).sqrt();
            assert!((band.mean[j] - expect[j]).abs() < 4.0 * sd / (20_000f64).sqrt(), "region {j}");
        }
        assert_eq!(forecast(&draws[..50], &data, &fut, 9).unwrap().paths, f.paths[..50].to_vec());
    }

    #[test]
    fn long_forecast_returns_to_seasonal_path() {
        // mid-June start: no holiday within the 60 days after the data end
        let s = NaiveDate::from_ymd_opt(2016, 2, 1).unwrap();
        let mut truth = recovery_truth(2, 2);
        truth.emission.xi = [0.85, 0.75];
        let sc = scenario(s, 130, truth, ModelMode::FourState, 10).unwrap();
        let data = FitData::with_harmonics(sc.sim.y.clone(), sc.cov.clone(), ModelMode::FourState, 2).unwrap();
        let fut = future(&sc, 60);
        assert!(fut.days.iter().all(|d| d.gap() > 3));
        let f = forecast(&vec![sc.truth.clone(); 4000], &data, &fut, 11).unwrap();
        let band = *f.bands().unwrap().last().unwrap();
        let e = &sc.truth.emission;
        let d = fut.days.last().unwrap();
        let mu = mean_from_base(e, mean_base(e, d, &DayDesign::new(d.t_index, 2)), d, 3);
        for j in 0..2 {
            let sd = (f.paths.iter().map(|y| (y[59][j] - band.mean[j]).powi(2)).sum::<f64>() / 4000.0).sqrt();
            assert!((band.mean[j] - mu[j]).abs() < 4.0 * sd / 4000f64.sqrt() + 1e-3, "region {j}");
        }
    }

    #[test]
    fn forecast_must_follow_the_data() {
        let (sc, data) = calibrated(100, 12);
        let mut fut = future(&sc, 5);
        fut.days.remove(0);
        assert!(forecast(&[sc.truth.clone()], &data, &fut, 0).is_err());
    }
}
