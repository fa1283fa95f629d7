//! Forward simulation of hidden states and log demand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::calendar::{CovariateSeries, DayCovariates};
use crate::emission::{
    mean_base, mean_from_base, omega_base, omega_from_base, precision_matrix_unchecked, psi_from_xi,
    stationary_variance, DayDesign, EmissionParams, PrecisionComponents,
};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, Mat2};
use crate::params::ModelParams;
use crate::state_model::{initial_distribution_for, transition_matrix_for, ModelMode, TransitionParams};

/// States `s_0..s_T` (zero-based), log demand for days `1..=T` and the
/// covariates used.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub states: Vec<usize>,
    pub y: Vec<[f64; 2]>,
    pub cov: CovariateSeries,
}

impl SimulationOutput {
    /// States of the observed days `1..=T`.
    pub fn observed_states(&self) -> &[usize] {
        &self.states[1..]
    }
}

/// Where a simulated path starts.
#[derive(Debug, Clone, Copy)]
pub enum Start {
    /// Draw `s_0` from the initial distribution and `y_1` from the
    /// stationary law.
    Stationary { day0_n: u32, day0_p: u32 },
    /// Continue from a known previous day.
    After { state: usize, y: [f64; 2], mu: [f64; 2] },
}

fn draw_categorical<R: Rng + ?Sized>(probs: &[f64; 4], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = k;
            if u < acc {
                return k;
            }
        }
    }
    last
}

fn std_normal2<R: Rng + ?Sized>(rng: &mut R) -> [f64; 2] {
    [rng.sample(StandardNormal), rng.sample(StandardNormal)]
}

/// Draw from `N(0, Ω⁻¹)` using the factorisation of `Ω`.
fn innovation<R: Rng + ?Sized>(pc: &PrecisionComponents<f64>, rng: &mut R) -> [f64; 2] {
    let z = std_normal2(rng);
    let e1 = z[0] / pc.tau[0].sqrt();
    [e1, pc.phi * e1 + z[1] / pc.tau[1].sqrt()]
}

/// Samples one transition from `prev` under the covariates of `day`.
pub fn step_state<R: Rng + ?Sized>(
    transition: &TransitionParams<f64>,
    prev: usize,
    day: &DayCovariates,
    mode: ModelMode,
    rng: &mut R,
) -> usize {
    let m = transition_matrix_for(transition, day.n, day.p, mode);
    draw_categorical(&m[prev], rng)
}

/// Simulates states and demand over `days` from `start`. Returns the state
/// before the first day followed by one state per day, and the demand.
pub fn simulate_path<R: Rng + ?Sized>(
    params: &ModelParams<f64>,
    days: &[DayCovariates],
    design: &[DayDesign],
    mode: ModelMode,
    start: Start,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<[f64; 2]>)> {
    let e: &EmissionParams<f64> = &params.emission;
    e.check_support()?;
    if design.len() != days.len() {
        return Err(Error::InvalidInput("design and covariates differ in length".into()));
    }
    let harmonics = design.first().map_or(0, |d| d.annual_cos.len());
    if harmonics < e.k_gamma().max(e.k_kappa()) {
        return Err(Error::InvalidInput("design has too few annual harmonics".into()));
    }
    let psi = psi_from_xi(e.xi)?;
    let mut states = Vec::with_capacity(days.len() + 1);
    let mut y = Vec::with_capacity(days.len());
    let (mut prev_state, mut prev_dev) = match start {
        Start::Stationary { day0_n, day0_p } => {
            let init = initial_distribution_for::<f64>(day0_n, day0_p, mode);
            (draw_categorical(&init.probs, rng), None)
        }
        Start::After { state, y, mu } => (state, Some([y[0] - mu[0], y[1] - mu[1]])),
    };
    states.push(prev_state);
    for (day, des) in days.iter().zip(design) {
        let s = step_state(&params.transition, prev_state, day, mode, rng);
        let mu = mean_from_base(e, mean_base(e, day, des), day, s);
        let pc = PrecisionComponents::from_omega(omega_from_base(e, omega_base(e, des), day, s));
        let dev = match prev_dev {
            Some(d) => {
                let eps = innovation(&pc, rng);
                [
                    psi[0][0] * d[0] + psi[0][1] * d[1] + eps[0],
                    psi[1][0] * d[0] + psi[1][1] * d[1] + eps[1],
                ]
            }
            None => {
                let v = stationary_variance(&psi, &precision_matrix_unchecked(&pc))?;
                let l = cholesky(&[v[0][0], v[0][1], v[1][0], v[1][1]], 2)
                    .ok_or_else(|| Error::Numerical("stationary variance is not positive definite".into()))?;
                let z = std_normal2(rng);
                [l[0] * z[0], l[2] * z[0] + l[3] * z[1]]
            }
        };
        y.push([mu[0] + dev[0], mu[1] + dev[1]]);
        states.push(s);
        prev_state = s;
        prev_dev = Some(dev);
    }
    Ok((states, y))
}

/// Simulates a full dataset over `cov` with a seeded ChaCha stream.
pub fn simulate(params: &ModelParams<f64>, cov: &CovariateSeries, mode: ModelMode, seed: u64) -> Result<SimulationOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_with(params, cov, mode, &mut rng)
}

pub fn simulate_with<R: Rng + ?Sized>(
    params: &ModelParams<f64>,
    cov: &CovariateSeries,
    mode: ModelMode,
    rng: &mut R,
) -> Result<SimulationOutput> {
    let k = params.emission.k_gamma().max(params.emission.k_kappa());
    let design: Vec<DayDesign> = cov.days.iter().map(|d| DayDesign::new(d.t_index, k)).collect();
    let start = Start::Stationary { day0_n: cov.day0.n, day0_p: cov.day0.p };
    let (states, y) = simulate_path(params, &cov.days, &design, mode, start, rng)?;
    Ok(SimulationOutput { states, y, cov: cov.clone() })
}

/// Stationary covariance of the demand deviations on a day in `state`.
pub fn deviation_covariance(params: &EmissionParams<f64>, day: &DayCovariates, design: &DayDesign, state: usize) -> Result<Mat2<f64>> {
    let pc = PrecisionComponents::from_omega(omega_from_base(params, omega_base(params, design), day, state));
    stationary_variance(&params.psi()?, &precision_matrix_unchecked(&pc))
}
