//! Synthetic scenarios: a UK-style bank-holiday calendar, sinusoidal CWV and
//! a documented set of parameters with clear proximity effects.

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::calendar::{build_covariates, day_of_year_slot, CovariateSeries, HolidayCalendar, HolidayType, SeasonalCwvBaseline};
use crate::error::Result;
use crate::generative::{simulate, SimulationOutput};
use crate::params::ModelParams;
use crate::state_model::ModelMode;

/// Easter Sunday (anonymous Gregorian algorithm).
pub fn easter_sunday(year: i32) -> NaiveDate {
    let a = year % 19;
    let b = year / 100;
    let c = year % 100;
    let d = b / 4;
    let e = b % 4;
    let f = (b + 8) / 25;
    let g = (b - f + 1) / 3;
    let h = (19 * a + b - d - g + 15) % 30;
    let i = c / 4;
    let k = c % 4;
    let l = (32 + 2 * e + 2 * i - h - k) % 7;
    let m = (a + 11 * h + 22 * l) / 451;
    let month = (h + l - 7 * m + 114) / 31;
    let day = (h + l - 7 * m + 114) % 31 + 1;
    NaiveDate::from_ymd_opt(year, month as u32, day as u32).expect("valid Easter date")
}

fn is_weekend(d: NaiveDate) -> bool {
    matches!(d.weekday(), Weekday::Sat | Weekday::Sun)
}

fn first_monday(year: i32, month: u32) -> NaiveDate {
    let mut d = NaiveDate::from_ymd_opt(year, month, 1).expect("valid date");
    while d.weekday() != Weekday::Mon {
        d = d + Days::new(1);
    }
    d
}

fn last_monday(year: i32, month: u32) -> NaiveDate {
    let next = if month == 12 {
        NaiveDate::from_ymd_opt(year + 1, 1, 1)
    } else {
        NaiveDate::from_ymd_opt(year, month + 1, 1)
    }
    .expect("valid date");
    let mut d = next.pred_opt().expect("valid date");
    while d.weekday() != Weekday::Mon {
        d = d.pred_opt().expect("valid date");
    }
    d
}

/// Moves a fixed-date holiday off weekends and already-taken days.
fn substitute(mut d: NaiveDate, taken: &[NaiveDate]) -> NaiveDate {
    while is_weekend(d) || taken.contains(&d) {
        d = d + Days::new(1);
    }
    d
}

/// England and Wales bank holidays for the given years, with weekend
/// substitution. One-off holidays are not included.
pub fn uk_bank_holidays(first_year: i32, last_year: i32) -> Result<HolidayCalendar> {
    let mut out = Vec::new();
    for y in first_year..=last_year {
        let ny = substitute(NaiveDate::from_ymd_opt(y, 1, 1).expect("valid"), &[]);
        out.push((ny, HolidayType::Christmas));
        let easter = easter_sunday(y);
        out.push((easter - Days::new(2), HolidayType::Easter));
        out.push((easter + Days::new(1), HolidayType::Easter));
        out.push((first_monday(y, 5), HolidayType::Other));
        out.push((last_monday(y, 5), HolidayType::Other));
        out.push((last_monday(y, 8), HolidayType::Other));
        let xmas = substitute(NaiveDate::from_ymd_opt(y, 12, 25).expect("valid"), &[]);
        let boxing = substitute(NaiveDate::from_ymd_opt(y, 12, 26).expect("valid"), &[xmas]);
        out.push((xmas, HolidayType::Christmas));
        out.push((boxing, HolidayType::Christmas));
    }
    out.sort();
    HolidayCalendar::new(out)
}

/// Mean CWV on a day-of-year slot for the sinusoidal weather generator.
pub fn cwv_seasonal_mean(slot: u16) -> [f64; 2] {
    let a = 2.0 * std::f64::consts::PI * (slot as f64 - 15.0) / 366.0;
    [12.0 - 6.0 * a.cos(), 12.5 - 5.5 * a.cos()]
}

/// Seasonal sinusoid plus correlated AR(1) noise, two regions.
pub fn sinusoidal_cwv(dates: &[NaiveDate], seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (phi, sd, corr) = (0.7, 1.2, 0.8);
    let mut state = [0.0f64; 2];
    dates
        .iter()
        .map(|&d| {
            let z: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
            let e = [z[0], corr * z[0] + (1.0 - corr * corr).sqrt() * z[1]];
            for j in 0..2 {
                state[j] = phi * state[j] + sd * (1.0 - phi * phi).sqrt() * e[j];
            }
            let m = cwv_seasonal_mean(day_of_year_slot(d));
            [m[0] + state[0], m[1] + state[1]]
        })
        .collect()
}

/// Baseline matching [`cwv_seasonal_mean`] on every slot.
pub fn sinusoidal_baseline() -> SeasonalCwvBaseline {
    let rows = (1..=366u16).map(cwv_seasonal_mean).collect();
    SeasonalCwvBaseline::from_rows(rows).expect("366 finite rows")
}

/// Parameters used to generate the recovery scenario.
///
/// | block | value |
/// |---|---|
/// | ν | (0.3, −40, 0.2, 30, −0.5, 0.8, 0.5) |
/// | ξ | (0.85, 0.75), so Ψ has 0.6 on and 0.1 off the diagonal |
/// | α | (7.0, 7.5) |
/// | β (Easter, other, Christmas) | region 1 (−0.45, −0.5, −0.6), region 2 (−0.5, −0.4, −0.55) |
/// | ζ | region 1 (−0.04, 0.002), region 2 (−0.035, 0.0015) |
/// | ρ_β, ρ_θ | (0.55, 0.5), 0.5 |
/// | η | (0.3, 7.4, 7.0) |
/// | θ | (0.1, −0.8, −0.6) |
///
/// Annual and weekly Fourier terms use a few low harmonics; the latent
/// hierarchy means sit at the averages of the group members.
pub fn recovery_truth(k_gamma: usize, k_kappa: usize) -> ModelParams<f64> {
    let mut p = ModelParams::zeros(k_gamma, k_kappa);
    p.transition = crate::state_model::TransitionParams::from_array([0.3, -40.0, 0.2, 30.0, -0.5, 0.8, 0.5]);
    let e = &mut p.emission;
    e.xi = [0.85, 0.75];
    e.alpha = [7.0, 7.5];
    e.beta = [[-0.45, -0.5, -0.6], [-0.5, -0.4, -0.55]];
    e.zeta = [[-0.04, 0.002], [-0.035, 0.0015]];
    e.rho_beta = [0.55, 0.5];
    e.rho_theta = 0.5;
    e.eta = [0.3, 7.4, 7.0];
    e.theta = [0.1, -0.8, -0.6];
    let annual = [[0.30, 0.05, 0.05, 0.0], [0.25, 0.08, 0.04, 0.01]];
    for j in 0..2 {
        for k in 0..k_gamma.min(2) {
            e.gamma[j].cos[k] = annual[j][2 * k];
            e.gamma[j].sin[k] = annual[j][2 * k + 1];
        }
        e.delta[j].cos = vec![0.04, 0.02, 0.01];
        e.delta[j].sin = vec![0.03 - 0.01 * j as f64, -0.01, 0.005];
    }
    if k_kappa > 0 {
        e.kappa[0].cos[0] = 0.05;
        e.kappa[1].cos[0] = -0.3;
        e.kappa[2].cos[0] = -0.2;
        e.kappa[1].sin[0] = 0.1;
    }
    let l = &mut p.latents;
    l.mu_alpha = 7.25;
    l.mu_zeta = [-0.0375, 0.00175];
    for m in 0..2 {
        for k in 0..k_gamma {
            l.mu_gamma.cos[k] = 0.5 * (e.gamma[0].cos[k] + e.gamma[1].cos[k]);
            l.mu_gamma.sin[k] = 0.5 * (e.gamma[0].sin[k] + e.gamma[1].sin[k]);
        }
        for k in 0..3 {
            let v = |f: &crate::emission::Fourier<f64>| if m == 0 { f.cos[k] } else { f.sin[k] };
            let mean = 0.5 * (v(&e.delta[0]) + v(&e.delta[1]));
            if m == 0 {
                l.mu_delta.cos[k] = mean;
            } else {
                l.mu_delta.sin[k] = mean;
            }
        }
    }
    l.mu_beta = [-0.475, -0.45, -0.575];
    let logit = |v: f64| (v / (1.0 - v)).ln();
    l.rho_tilde_beta = 0.5 * (logit(0.55) + logit(0.5));
    l.mu_rho_tilde = 0.5 * (l.rho_tilde_beta + logit(0.5));
    p
}

/// A simulated dataset together with everything used to produce it.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub calendar: HolidayCalendar,
    pub dates: Vec<NaiveDate>,
    pub cwv: Vec<[f64; 2]>,
    pub baseline: SeasonalCwvBaseline,
    pub cov: CovariateSeries,
    pub truth: ModelParams<f64>,
    pub sim: SimulationOutput,
}

/// Simulates `days` days from `start` under `truth` on the UK-style
/// calendar with sinusoidal CWV. Weather and demand use separate seeds
/// derived from `seed`.
pub fn scenario(start: NaiveDate, days: u64, truth: ModelParams<f64>, mode: ModelMode, seed: u64) -> Result<Scenario> {
    let dates: Vec<NaiveDate> = (0..days).map(|i| start + Days::new(i)).collect();
    let last = *dates.last().unwrap_or(&start);
    let calendar = uk_bank_holidays(start.year() - 1, last.year() + 1)?;
    let cwv = sinusoidal_cwv(&dates, seed.wrapping_mul(2).wrapping_add(1));
    let baseline = sinusoidal_baseline();
    let cov = build_covariates(&dates, &calendar, &cwv, &baseline)?;
    let sim = simulate(&truth, &cov, mode, seed.wrapping_mul(2))?;
    Ok(Scenario { calendar, dates, cwv, baseline, cov, truth, sim })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state_model::{HOLIDAY, NORMAL, POST, PRE};

    fn d(y: i32, m: u32, dd: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, dd).unwrap()
    }

    #[test]
    fn easter_dates() {
        assert_eq!(easter_sunday(2019), d(2019, 4, 21));
        assert_eq!(easter_sunday(2020), d(2020, 4, 12));
        assert_eq!(easter_sunday(2021), d(2021, 4, 4));
        assert_eq!(easter_sunday(2024), d(2024, 3, 31));
    }

    #[test]
    fn uk_2021_calendar() {
        let cal = uk_bank_holidays(2021, 2021).unwrap();
        let dates: Vec<_> = cal.entries().iter().map(|e| e.0).collect();
        assert_eq!(
            dates,
            vec![
                d(2021, 1, 1),
                d(2021, 4, 2),
                d(2021, 4, 5),
                d(2021, 5, 3),
                d(2021, 5, 31),
                d(2021, 8, 30),
                d(2021, 12, 27),
                d(2021, 12, 28)
            ]
        );
    }

    #[test]
    fn truth_is_in_support_and_scenario_has_proximity_days() {
        let truth = recovery_truth(2, 2);
        truth.emission.check_support().unwrap();
        let sc = scenario(d(2015, 1, 5), 1500, truth, ModelMode::FourState, 7).unwrap();
        let s = sc.sim.observed_states();
        let count = |k| s.iter().filter(|&&v| v == k).count();
        assert!(count(PRE) > 10 && count(POST) > 10, "pre {} post {}", count(PRE), count(POST));
        assert_eq!(count(HOLIDAY), sc.cov.days.iter().filter(|d| d.is_holiday()).count());
        assert!(count(NORMAL) > 1300);
        assert!(sc.sim.y.iter().all(|v| (5.0..9.5).contains(&v[0]) && (5.5..10.0).contains(&v[1])));
    }
}
