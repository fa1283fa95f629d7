//! Forward filtering and backward smoothing on the augmented chain
//! `S̃_t = (S_{t-1}, S_t)`.
//!
//! Messages are kept in log space and normalised every day; the per-day log
//! normalisers sum to the observed-data log-likelihood.

use rayon::prelude::*;

use crate::calendar::CovariateSeries;
use crate::emission::{
    mean_base, mean_from_base, mvn2_log_density_cov, omega_base, omega_from_base,
    precision_matrix_unchecked, psi_from_xi, stationary_variance, DayDesign, EmissionParams,
    PrecisionComponents, DEFAULT_K_GAMMA, DEFAULT_K_KAPPA,
};
use crate::error::{Error, Result};
use crate::linalg::Mat2;
use crate::params::ModelParams;
use crate::scalar::{log_sum_exp, Real};
use crate::state_model::{
    initial_distribution_for, log_transition_matrix, transition_matrix_for, ModelMode, TransitionParams, HOLIDAY, NORMAL, N_PAIRS,
    N_STATES, PAIRS,
};

/// Observations, covariates and precomputed Fourier features.
#[derive(Debug, Clone)]
pub struct FitData {
    /// Log demand per day.
    pub y: Vec<[f64; 2]>,
    pub cov: CovariateSeries,
    pub mode: ModelMode,
    pub design: Vec<DayDesign>,
}

impl FitData {
    pub fn new(y: Vec<[f64; 2]>, cov: CovariateSeries, mode: ModelMode) -> Result<Self> {
        Self::with_harmonics(y, cov, mode, DEFAULT_K_GAMMA.max(DEFAULT_K_KAPPA))
    }

    pub fn with_harmonics(y: Vec<[f64; 2]>, cov: CovariateSeries, mode: ModelMode, harmonics: usize) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::InvalidInput("at least one day of data is required".into()));
        }
        if y.len() != cov.len() {
            return Err(Error::InvalidInput(format!(
                "{} observations but {} covariate days",
                y.len(),
                cov.len()
            )));
        }
        if let Some(t) = y.iter().position(|v| !v.iter().all(|x| x.is_finite())) {
            return Err(Error::InvalidInput(format!("non-finite observation on day {}", t + 1)));
        }
        let design = cov.days.iter().map(|d| DayDesign::new(d.t_index, harmonics)).collect();
        Ok(Self { y, cov, mode, design })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn with_mode(&self, mode: ModelMode) -> Self {
        Self { mode, ..self.clone() }
    }

    pub(crate) fn harmonics(&self) -> usize {
        self.design[0].annual_cos.len()
    }

    pub(crate) fn check_params<S: Real>(&self, p: &EmissionParams<S>) -> Result<()> {
        if p.k_gamma().max(p.k_kappa()) > self.harmonics() {
            return Err(Error::InvalidInput(format!(
                "fit data carries {} annual harmonics but the parameters need {}",
                self.harmonics(),
                p.k_gamma().max(p.k_kappa())
            )));
        }
        Ok(())
    }
}

/// Whether `state` can occur on a day, given its holiday status and the mode.
#[inline]
pub fn state_allowed(is_holiday: bool, state: usize, mode: ModelMode) -> bool {
    if is_holiday {
        state == HOLIDAY
    } else {
        match mode {
            ModelMode::FourState => state != HOLIDAY,
            ModelMode::TwoState => state == NORMAL,
        }
    }
}

/// State-specific means and precision factors for one day.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DayStates<S> {
    pub mu: [[S; 2]; N_STATES],
    pub omega: [[S; 3]; N_STATES],
    pub pc: [PrecisionComponents<S>; N_STATES],
    /// `-ln 2π + ½ ln det Ω` per state.
    pub log_norm: [S; N_STATES],
}

pub(crate) fn day_states<S: Real>(params: &EmissionParams<S>, data: &FitData, t: usize) -> DayStates<S> {
    let day = &data.cov.days[t];
    let design = &data.design[t];
    let mb = mean_base(params, day, design);
    let ob = omega_base(params, design);
    let mut mu = [[S::zero(); 2]; N_STATES];
    let mut omega = [[S::zero(); 3]; N_STATES];
    let mut pc = [PrecisionComponents { phi: S::zero(), tau: [S::one(); 2] }; N_STATES];
    let mut log_norm = [S::zero(); N_STATES];
    let ln_2pi = S::c((2.0 * std::f64::consts::PI).ln());
    for s in 0..N_STATES {
        if state_allowed(day.is_holiday(), s, data.mode) {
            mu[s] = mean_from_base(params, mb, day, s);
            omega[s] = omega_from_base(params, ob, day, s);
            pc[s] = PrecisionComponents::from_omega(omega[s]);
            log_norm[s] = S::c(0.5) * pc[s].log_det() - ln_2pi;
        }
    }
    DayStates { mu, omega, pc, log_norm }
}

/// `ln p(y_t | y_{t-1}, s_{t-1}, s_t)` for every augmented pair and day;
/// `-∞` where a pair is not admissible on that day.
pub fn log_emission_table<S: Real>(params: &EmissionParams<S>, data: &FitData) -> Result<Vec<[S; N_PAIRS]>> {
    let states = all_day_states(params, data)?;
    log_emission_table_from_states(params, data, &states)
}

pub(crate) fn all_day_states<S: Real>(params: &EmissionParams<S>, data: &FitData) -> Result<Vec<DayStates<S>>> {
    params.check_support()?;
    data.check_params(params)?;
    Ok((0..data.len()).map(|t| day_states(params, data, t)).collect())
}

pub(crate) fn log_emission_table_from_states<S: Real>(
    params: &EmissionParams<S>,
    data: &FitData,
    states: &[DayStates<S>],
) -> Result<Vec<[S; N_PAIRS]>> {
    let psi = psi_from_xi(params.xi)?;
    let days = &data.cov.days;
    let mut out = vec![[S::neg_infinity(); N_PAIRS]; data.len()];
    let mut prev: Option<&DayStates<S>> = None;
    for t in 0..data.len() {
        let cur = &states[t];
        let y = [S::c(data.y[t][0]), S::c(data.y[t][1])];
        let hol = days[t].is_holiday();
        match &prev {
            None => {
                let mut by_state = [S::neg_infinity(); N_STATES];
                for (s, v) in by_state.iter_mut().enumerate() {
                    if state_allowed(hol, s, data.mode) {
                        *v = first_day_log_density(&psi, &cur.pc[s], y, cur.mu[s])?;
                    }
                }
                for (k, &(_, b)) in PAIRS.iter().enumerate() {
                    out[t][k] = by_state[b];
                }
            }
            Some(p) => {
                let y_prev = data.y[t - 1];
                let hol_prev = days[t - 1].is_holiday();
                for (k, &(a, b)) in PAIRS.iter().enumerate() {
                    if !state_allowed(hol_prev, a, data.mode) || !state_allowed(hol, b, data.mode) {
                        continue;
                    }
                    let d = [S::c(y_prev[0]) - p.mu[a][0], S::c(y_prev[1]) - p.mu[a][1]];
                    let e = [
                        y[0] - cur.mu[b][0] - psi[0][0] * d[0] - psi[0][1] * d[1],
                        y[1] - cur.mu[b][1] - psi[1][0] * d[0] - psi[1][1] * d[1],
                    ];
                    out[t][k] = cur.log_norm[b] - S::c(0.5) * cur.pc[b].quad(e);
                }
            }
        }
        prev = Some(cur);
    }
    Ok(out)
}

pub(crate) fn first_day_log_density<S: Real>(
    psi: &Mat2<S>,
    pc: &PrecisionComponents<S>,
    y: [S; 2],
    mu: [S; 2],
) -> Result<S> {
    let v = stationary_variance(psi, &precision_matrix_unchecked(pc))?;
    Ok(mvn2_log_density_cov(y, mu, &v))
}

/// Log transition weights per augmented pair: on the first day
/// `ln ℓ_a(n_0,p_0) + ln λ_{a,b}(n_1,p_1)`, afterwards `ln λ_{b,c}(n_t,p_t)`
/// for the pair `(b, c)`.
pub fn log_transition_table<S: Real>(transition: &TransitionParams<S>, data: &FitData) -> Vec<[S; N_PAIRS]> {
    let mut out = vec![[S::neg_infinity(); N_PAIRS]; data.len()];
    let d0 = data.cov.day0;
    let init = initial_distribution_for::<S>(d0.n, d0.p, data.mode);
    for (t, day) in data.cov.days.iter().enumerate() {
        let lt = log_transition_matrix(transition, day.n, day.p, data.mode);
        for (k, &(a, b)) in PAIRS.iter().enumerate() {
            out[t][k] = if t == 0 { init.probs[a].ln() + lt[a][b] } else { lt[a][b] };
        }
    }
    out
}

/// Normalised forward messages `ln Pr(S̃_t = k | y_{1:t})` and the per-day
/// log normalisers `ln p(y_t | y_{1:t-1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardMessages<S> {
    pub log_alpha: Vec<[S; N_PAIRS]>,
    pub log_norm: Vec<S>,
}

impl<S: Real> ForwardMessages<S> {
    pub fn log_likelihood(&self) -> S {
        self.log_norm.iter().fold(S::zero(), |a, &b| a + b)
    }

    /// `ln Pr(S̃_t = k, y_{1:t})`.
    pub fn joint(&self, t: usize) -> [S; N_PAIRS] {
        let c: S = self.log_norm[..=t].iter().fold(S::zero(), |a, &b| a + b);
        self.log_alpha[t].map(|v| v + c)
    }
}

/// Forward recursion from precomputed tables.
pub fn forward_from_tables<S: Real>(lt: &[[S; N_PAIRS]], lf: &[[S; N_PAIRS]]) -> ForwardMessages<S> {
    let n = lf.len();
    let mut log_alpha = Vec::with_capacity(n);
    let mut log_norm = Vec::with_capacity(n);
    let mut a = [S::neg_infinity(); N_PAIRS];
    for k in 0..N_PAIRS {
        a[k] = lt[0][k] + lf[0][k];
    }
    push_normalised(&mut log_alpha, &mut log_norm, a);
    for t in 1..n {
        let prev = log_alpha[t - 1];
        let m = marginal_by_second(&prev);
        let mut a = [S::neg_infinity(); N_PAIRS];
        for (k, &(b, _)) in PAIRS.iter().enumerate() {
            a[k] = m[b] + lt[t][k] + lf[t][k];
        }
        push_normalised(&mut log_alpha, &mut log_norm, a);
    }
    ForwardMessages { log_alpha, log_norm }
}

fn push_normalised<S: Real>(log_alpha: &mut Vec<[S; N_PAIRS]>, log_norm: &mut Vec<S>, a: [S; N_PAIRS]) {
    let c = log_sum_exp(&a);
    if c.is_finite() {
        log_alpha.push(a.map(|v| v - c));
    } else {
        log_alpha.push([S::neg_infinity(); N_PAIRS]);
    }
    log_norm.push(c);
}

/// `lse` over pairs grouped by their second coordinate.
#[inline]
fn marginal_by_second<S: Real>(x: &[S; N_PAIRS]) -> [S; N_STATES] {
    let mut out = [S::neg_infinity(); N_STATES];
    let mut buf = [[S::neg_infinity(); 4]; N_STATES];
    let mut cnt = [0usize; N_STATES];
    for (k, &(_, b)) in PAIRS.iter().enumerate() {
        buf[b][cnt[b]] = x[k];
        cnt[b] += 1;
    }
    for s in 0..N_STATES {
        out[s] = log_sum_exp(&buf[s][..cnt[s]]);
    }
    out
}

/// Observed-data log-likelihood and the forward messages. The likelihood is
/// `-∞` when no admissible state path has positive density.
pub fn forward_filter<S: Real>(
    data: &FitData,
    emission: &EmissionParams<S>,
    transition: &TransitionParams<S>,
) -> Result<(S, ForwardMessages<S>)> {
    let lf = log_emission_table(emission, data)?;
    let lt = log_transition_table(transition, data);
    let msgs = forward_from_tables(&lt, &lf);
    let ll = msgs.log_likelihood();
    if ll.is_nan() {
        return Err(Error::Numerical("log-likelihood is NaN".into()));
    }
    Ok((ll, msgs))
}

pub fn log_likelihood<S: Real>(data: &FitData, params: &ModelParams<S>) -> Result<S> {
    forward_filter(data, &params.emission, &params.transition).map(|r| r.0)
}

/// Linear-scale transition weights per pair and day, matching
/// [`log_transition_table`] after exponentiation.
pub(crate) fn transition_table(transition: &TransitionParams<f64>, data: &FitData) -> Vec<[f64; N_PAIRS]> {
    let d0 = data.cov.day0;
    let init = initial_distribution_for::<f64>(d0.n, d0.p, data.mode);
    data.cov
        .days
        .iter()
        .enumerate()
        .map(|(t, day)| {
            let m = transition_matrix_for(transition, day.n, day.p, data.mode);
            let mut row = [0.0; N_PAIRS];
            for (k, &(a, b)) in PAIRS.iter().enumerate() {
                row[k] = if t == 0 { init.probs[a] * m[a][b] } else { m[a][b] };
            }
            row
        })
        .collect()
}

/// Scaled forward (and optionally backward) pass in linear space. Returns
/// `None` when a scaling constant underflows, in which case callers use the
/// log-space recursion.
pub(crate) fn scaled_forward_backward(
    tr: &[[f64; N_PAIRS]],
    lf: &[[f64; N_PAIRS]],
    pairs: bool,
) -> Option<(f64, Option<Vec<[f64; N_PAIRS]>>)> {
    let n = lf.len();
    let mut emis = vec![[0.0; N_PAIRS]; n];
    let mut alpha = vec![[0.0; N_PAIRS]; n];
    let mut scale = vec![0.0; n];
    let mut ll = 0.0;
    for t in 0..n {
        let m = lf[t].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return None;
        }
        let mut by_b = [1.0; N_STATES];
        if t > 0 {
            by_b = [0.0; N_STATES];
            for (k, &(_, b)) in PAIRS.iter().enumerate() {
                by_b[b] += alpha[t - 1][k];
            }
        }
        let mut c = 0.0;
        for (k, &(a, _)) in PAIRS.iter().enumerate() {
            let e = if lf[t][k] == f64::NEG_INFINITY { 0.0 } else { (lf[t][k] - m).exp() };
            emis[t][k] = e;
            let v = by_b[a] * tr[t][k] * e;
            alpha[t][k] = v;
            c += v;
        }
        if !(c > 1e-250) || !c.is_finite() {
            return None;
        }
        for v in alpha[t].iter_mut() {
            *v /= c;
        }
        scale[t] = c;
        ll += c.ln() + m;
    }
    if !pairs {
        return Some((ll, None));
    }
    let mut out = vec![[0.0; N_PAIRS]; n];
    let mut beta = [1.0; N_PAIRS];
    for t in (0..n).rev() {
        for k in 0..N_PAIRS {
            out[t][k] = alpha[t][k] * beta[k];
        }
        if t == 0 {
            break;
        }
        let mut by_first = [0.0; N_STATES];
        for (k, &(b, _)) in PAIRS.iter().enumerate() {
            by_first[b] += tr[t][k] * emis[t][k] * beta[k];
        }
        for (k, &(_, b)) in PAIRS.iter().enumerate() {
            beta[k] = by_first[b] / scale[t];
        }
        if !beta.iter().all(|v| v.is_finite()) {
            return None;
        }
    }
    Some((ll, Some(out)))
}

/// Log-likelihood in `f64`, using the scaled linear-space recursion with a
/// log-space fallback.
pub fn log_likelihood_f64(data: &FitData, params: &ModelParams<f64>) -> Result<f64> {
    let lf = log_emission_table(&params.emission, data)?;
    let tr = transition_table(&params.transition, data);
    if let Some((ll, _)) = scaled_forward_backward(&tr, &lf, false) {
        return Ok(ll);
    }
    let lt = log_transition_table(&params.transition, data);
    let ll = forward_from_tables(&lt, &lf).log_likelihood();
    if ll.is_nan() {
        return Err(Error::Numerical("log-likelihood is NaN".into()));
    }
    Ok(ll)
}

/// Smoothed pair probabilities `Pr(S̃_t = k | y)` from tables and messages.
pub fn smooth_pairs_from_tables<S: Real>(
    msgs: &ForwardMessages<S>,
    lt: &[[S; N_PAIRS]],
    lf: &[[S; N_PAIRS]],
) -> Vec<[S; N_PAIRS]> {
    let n = msgs.log_alpha.len();
    let mut out = vec![[S::zero(); N_PAIRS]; n];
    let mut lb = [S::zero(); N_PAIRS];
    for t in (0..n).rev() {
        for k in 0..N_PAIRS {
            out[t][k] = (msgs.log_alpha[t][k] + lb[k]).exp();
        }
        if t == 0 {
            break;
        }
        // β_{t-1}(a, b) depends only on b
        let mut next_by_first = [[S::neg_infinity(); 4]; N_STATES];
        let mut cnt = [0usize; N_STATES];
        for (k, &(b, _)) in PAIRS.iter().enumerate() {
            next_by_first[b][cnt[b]] = lt[t][k] + lf[t][k] + lb[k];
            cnt[b] += 1;
        }
        let mut by_b = [S::neg_infinity(); N_STATES];
        for b in 0..N_STATES {
            by_b[b] = log_sum_exp(&next_by_first[b][..cnt[b]]) - msgs.log_norm[t];
        }
        for (k, &(_, b)) in PAIRS.iter().enumerate() {
            lb[k] = by_b[b];
        }
    }
    out
}

/// `Pr(S_t = k | y)` for `t = 0..T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedStates<S> {
    pub probs: Vec<[S; N_STATES]>,
}

impl<S: Real> SmoothedStates<S> {
    /// Pointwise posterior mode for each day `t = 0..T` (0-based states).
    pub fn modes(&self) -> Vec<usize> {
        self.probs
            .iter()
            .map(|p| {
                (0..N_STATES).fold(0, |best, s| if p[s] > p[best] { s } else { best })
            })
            .collect()
    }
}

fn normalise4<S: Real>(mut v: [S; N_STATES]) -> [S; N_STATES] {
    let s = v.iter().fold(S::zero(), |a, &b| a + b);
    if s > S::zero() {
        for x in v.iter_mut() {
            *x = *x / s;
        }
    }
    v
}

/// Collapses pair marginals to per-day state marginals (day 0 from the first
/// coordinate of `S̃_1`).
pub fn state_marginals<S: Real>(pairs: &[[S; N_PAIRS]]) -> SmoothedStates<S> {
    let mut probs = Vec::with_capacity(pairs.len() + 1);
    let mut first = [S::zero(); N_STATES];
    for (k, &(a, _)) in PAIRS.iter().enumerate() {
        first[a] = first[a] + pairs[0][k];
    }
    probs.push(normalise4(first));
    for pt in pairs {
        let mut v = [S::zero(); N_STATES];
        for (k, &(_, b)) in PAIRS.iter().enumerate() {
            v[b] = v[b] + pt[k];
        }
        probs.push(normalise4(v));
    }
    SmoothedStates { probs }
}

/// Backward pass for messages produced by [`forward_filter`] on the same
/// inputs.
pub fn backward_smooth<S: Real>(
    msgs: &ForwardMessages<S>,
    data: &FitData,
    emission: &EmissionParams<S>,
    transition: &TransitionParams<S>,
) -> Result<SmoothedStates<S>> {
    if msgs.log_alpha.len() != data.len() {
        return Err(Error::InvalidInput(format!(
            "messages cover {} days but the data has {}",
            msgs.log_alpha.len(),
            data.len()
        )));
    }
    if !msgs.log_likelihood().is_finite() {
        return Err(Error::Numerical("cannot smooth: the likelihood is zero".into()));
    }
    let lf = log_emission_table(emission, data)?;
    let lt = log_transition_table(transition, data);
    Ok(state_marginals(&smooth_pairs_from_tables(msgs, &lt, &lf)))
}

/// Filter then smooth at one parameter value.
pub fn smooth<S: Real>(data: &FitData, params: &ModelParams<S>) -> Result<SmoothedStates<S>> {
    let lf = log_emission_table(&params.emission, data)?;
    let lt = log_transition_table(&params.transition, data);
    let msgs = forward_from_tables(&lt, &lf);
    if !msgs.log_likelihood().is_finite() {
        return Err(Error::Numerical("cannot smooth: the likelihood is zero".into()));
    }
    Ok(state_marginals(&smooth_pairs_from_tables(&msgs, &lt, &lf)))
}

/// Average of per-draw smoothed marginals.
pub fn rao_blackwell_states(draws: &[ModelParams<f64>], data: &FitData) -> Result<SmoothedStates<f64>> {
    if draws.is_empty() {
        return Err(Error::InvalidInput("at least one draw is required".into()));
    }
    let per_draw: Vec<SmoothedStates<f64>> =
        draws.par_iter().map(|p| smooth(data, p)).collect::<Result<_>>()?;
    let m = per_draw.len() as f64;
    let mut probs = vec![[0.0; N_STATES]; data.len() + 1];
    for s in &per_draw {
        for (acc, p) in probs.iter_mut().zip(&s.probs) {
            for k in 0..N_STATES {
                acc[k] += p[k];
            }
        }
    }
    for p in probs.iter_mut() {
        for v in p.iter_mut() {
            *v /= m;
        }
    }
    Ok(SmoothedStates { probs })
}
