//! Conditionally stationary bivariate VAR(1) model for log demand.
//!
//! Given the states on days `t-1` and `t`,
//!
//! ```text
//! y_t - μ_t = Ψ (y_{t-1} - μ_{t-1}) + ε_t,   ε_t ~ N(0, Ω_t⁻¹)
//! ```
//!
//! and on the first day `y_1 ~ N(μ_1, V(Ψ, Ω_1))` with `V` the stationary
//! variance. `Ψ` is symmetric with equal diagonal entries and is
//! parameterised by `ξ ∈ (0,1)²`, which maps the stationarity region onto the
//! unit square. `Ω_t` is built from its square-root-free Cholesky factors
//! `(φ, τ1, τ2)`, whose log-scale versions are linear in the covariates.

use serde::{Deserialize, Serialize};

use crate::calendar::DayCovariates;
use crate::error::{Error, Result};
use crate::linalg::{mat2_det, mat2_inv, quad_form, solve3, sym_eigenvalues, Mat2};
use crate::scalar::Real;
use crate::state_model::{HOLIDAY, NORMAL, POST, PRE};

pub const ANNUAL_PERIOD: f64 = 365.25;
pub const WEEKLY_PERIOD: f64 = 7.0;
pub const WEEKLY_HARMONICS: usize = 3;
pub const DEFAULT_K_GAMMA: usize = 6;
pub const DEFAULT_K_KAPPA: usize = 12;

/// Log-precisions are clamped to this range before exponentiation.
pub const LOG_PRECISION_BOUND: f64 = 30.0;

/// Cosine/sine coefficient pairs of a truncated Fourier series; harmonic `k`
/// (1-based) lives at index `k - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fourier<S> {
    pub cos: Vec<S>,
    pub sin: Vec<S>,
}

impl<S: Real> Fourier<S> {
    pub fn zeros(k: usize) -> Self {
        Self {
            cos: vec![S::zero(); k],
            sin: vec![S::zero(); k],
        }
    }

    pub fn harmonics(&self) -> usize {
        self.cos.len()
    }

    /// Sum against precomputed `cos(2πkt/P)`, `sin(2πkt/P)` features.
    #[inline]
    pub fn eval_features(&self, cos: &[f64], sin: &[f64]) -> S {
        let mut acc = S::zero();
        for k in 0..self.cos.len() {
            acc = acc + self.cos[k] * S::c(cos[k]) + self.sin[k] * S::c(sin[k]);
        }
        acc
    }

    pub fn cast<T: Real>(&self) -> Fourier<T> {
        Fourier {
            cos: self.cos.iter().map(|x| T::c(x.f64())).collect(),
            sin: self.sin.iter().map(|x| T::c(x.f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.cos.iter().chain(&self.sin).all(|x| x.is_finite())
    }
}

/// `Σ_{k=1..K} a_k cos(2πkt/P) + b_k sin(2πkt/P)` over the first `k` harmonics.
pub fn fourier_sum<S: Real>(coeffs: &Fourier<S>, t_index: i64, period: f64, k: usize) -> S {
    (1..=k.min(coeffs.harmonics())).fold(S::zero(), |acc, h| {
        let arg = harmonic_angle(t_index, h, period);
        acc + coeffs.cos[h - 1] * S::c(arg.cos()) + coeffs.sin[h - 1] * S::c(arg.sin())
    })
}

/// `2π k t / P`, with `k t` reduced modulo `P` first so that large day
/// indices keep full precision.
#[inline]
pub fn harmonic_angle(t_index: i64, k: usize, period: f64) -> f64 {
    let kt = (t_index as f64) * k as f64;
    2.0 * std::f64::consts::PI * kt.rem_euclid(period) / period
}

/// All parameters of the conditional demand model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionParams<S> {
    /// Stationarity reparameterisation of Ψ, each in (0, 1).
    pub xi: [S; 2],
    pub alpha: [S; 2],
    /// Holiday effects, `beta[region][type - 1]`.
    pub beta: [[S; 3]; 2],
    /// Annual Fourier terms of the mean, per region.
    pub gamma: [Fourier<S>; 2],
    /// Weekly Fourier terms of the mean (three harmonics), per region.
    pub delta: [Fourier<S>; 2],
    /// `zeta[region] = [linear, interaction]` CWV coefficients.
    pub zeta: [[S; 2]; 2],
    /// Decay of the mean holiday effect on proximity days, each in (0, 1).
    pub rho_beta: [S; 2],
    /// Decay of the precision holiday effect, in (0, 1).
    pub rho_theta: S,
    /// Intercepts of `(φ, ln τ1, ln τ2)`.
    pub eta: [S; 3],
    /// Holiday effects on `(φ, ln τ1, ln τ2)`.
    pub theta: [S; 3],
    /// Annual Fourier terms of `(φ, ln τ1, ln τ2)`.
    pub kappa: [Fourier<S>; 3],
}

impl<S: Real> EmissionParams<S> {
    /// All-zero coefficients with Ψ = 0 and ρ = 1/2.
    pub fn zeros(k_gamma: usize, k_kappa: usize) -> Self {
        let half = S::c(0.5);
        Self {
            xi: [half; 2],
            alpha: [S::zero(); 2],
            beta: [[S::zero(); 3]; 2],
            gamma: [Fourier::zeros(k_gamma), Fourier::zeros(k_gamma)],
            delta: [
                Fourier::zeros(WEEKLY_HARMONICS),
                Fourier::zeros(WEEKLY_HARMONICS),
            ],
            zeta: [[S::zero(); 2]; 2],
            rho_beta: [half; 2],
            rho_theta: half,
            eta: [S::zero(); 3],
            theta: [S::zero(); 3],
            kappa: [
                Fourier::zeros(k_kappa),
                Fourier::zeros(k_kappa),
                Fourier::zeros(k_kappa),
            ],
        }
    }

    pub fn k_gamma(&self) -> usize {
        self.gamma[0].harmonics()
    }

    pub fn k_kappa(&self) -> usize {
        self.kappa[0].harmonics()
    }

    pub fn psi(&self) -> Result<Mat2<S>> {
        psi_from_xi(self.xi)
    }

    /// Checks the open-interval supports and finiteness.
    pub fn check_support(&self) -> Result<()> {
        let unit = |x: S| x > S::zero() && x < S::one();
        if !self.xi.iter().all(|&x| unit(x)) {
            return Err(Error::Support(format!("ξ = {:?} must lie in (0,1)²", self.xi)));
        }
        if !self.rho_beta.iter().all(|&x| unit(x)) || !unit(self.rho_theta) {
            return Err(Error::Support("ρ parameters must lie in (0,1)".into()));
        }
        let finite = self.alpha.iter().all(|x| x.is_finite())
            && self.beta.iter().flatten().all(|x| x.is_finite())
            && self.zeta.iter().flatten().all(|x| x.is_finite())
            && self.eta.iter().chain(&self.theta).all(|x| x.is_finite())
            && self.gamma.iter().chain(&self.delta).chain(&self.kappa).all(|f| f.all_finite());
        if !finite {
            return Err(Error::Support("non-finite emission parameter".into()));
        }
        if self.gamma[0].harmonics() != self.gamma[1].harmonics()
            || self.kappa.iter().any(|f| f.harmonics() != self.kappa[0].harmonics())
            || self.delta.iter().any(|f| f.harmonics() != WEEKLY_HARMONICS)
        {
            return Err(Error::InvalidInput("inconsistent Fourier truncation".into()));
        }
        Ok(())
    }

    pub fn cast<T: Real>(&self) -> EmissionParams<T> {
        let c = |x: S| T::c(x.f64());
        EmissionParams {
            xi: self.xi.map(c),
            alpha: self.alpha.map(c),
            beta: self.beta.map(|r| r.map(c)),
            gamma: [self.gamma[0].cast(), self.gamma[1].cast()],
            delta: [self.delta[0].cast(), self.delta[1].cast()],
            zeta: self.zeta.map(|r| r.map(c)),
            rho_beta: self.rho_beta.map(c),
            rho_theta: c(self.rho_theta),
            eta: self.eta.map(c),
            theta: self.theta.map(c),
            kappa: [self.kappa[0].cast(), self.kappa[1].cast(), self.kappa[2].cast()],
        }
    }
}

/// Maps `ξ ∈ (0,1)²` to the symmetric autoregressive matrix
/// `[[Ψon, Ψoff], [Ψoff, Ψon]]` with eigenvalues `χ_i = 2ξ_i - 1`.
pub fn psi_from_xi<S: Real>(xi: [S; 2]) -> Result<Mat2<S>> {
    if !xi.iter().all(|&x| x > S::zero() && x < S::one()) {
        return Err(Error::Support(format!("ξ = {xi:?} must lie in (0,1)²")));
    }
    Ok(psi_from_xi_unchecked(xi))
}

#[inline]
pub(crate) fn psi_from_xi_unchecked<S: Real>(xi: [S; 2]) -> Mat2<S> {
    let (on, off) = psi_on_off(xi);
    [[on, off], [off, on]]
}

/// `(Ψon, Ψoff)` for the given `ξ`.
#[inline]
pub fn psi_on_off<S: Real>(xi: [S; 2]) -> (S, S) {
    let two = S::c(2.0);
    let chi1 = two * xi[0] - S::one();
    let chi2 = two * xi[1] - S::one();
    let half = S::c(0.5);
    (half * (chi1 + chi2), half * (chi1 - chi2))
}

/// Inverse of [`psi_on_off`].
pub fn xi_from_psi<S: Real>(on: S, off: S) -> [S; 2] {
    let half = S::c(0.5);
    [half * (on + off + S::one()), half * (on - off + S::one())]
}

/// Holiday-effect weight for `state` (zero-based) with decay `rho`:
/// `ρ^n` before a holiday, 1 on it, `ρ^min(n,p)` after it, 0 otherwise.
pub fn state_weight<S: Real>(rho: S, state: usize, n: u32, p: u32) -> S {
    match state {
        PRE => rho.powi(n as i32),
        HOLIDAY => S::one(),
        POST => rho.powi(n.min(p) as i32),
        _ => S::zero(),
    }
}

/// Exponent `k` in `ρ^k` for `state`, or `None` when the weight is constant.
#[inline]
pub(crate) fn weight_exponent(state: usize, n: u32, p: u32) -> Option<u32> {
    match state {
        PRE => Some(n),
        POST => Some(n.min(p)),
        _ => None,
    }
}

/// Mean and precision holiday-effect weights for one region and state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateWeights<S> {
    pub mean: S,
    pub precision: S,
}

pub fn state_weights<S: Real>(
    params: &EmissionParams<S>,
    region: usize,
    state: usize,
    n: u32,
    p: u32,
) -> StateWeights<S> {
    StateWeights {
        mean: state_weight(params.rho_beta[region], state, n, p),
        precision: state_weight(params.rho_theta, state, n, p),
    }
}

/// Precomputed Fourier features of one day.
#[derive(Debug, Clone, PartialEq)]
pub struct DayDesign {
    pub annual_cos: Vec<f64>,
    pub annual_sin: Vec<f64>,
    pub weekly_cos: [f64; WEEKLY_HARMONICS],
    pub weekly_sin: [f64; WEEKLY_HARMONICS],
}

impl DayDesign {
    pub fn new(t_index: i64, annual_harmonics: usize) -> Self {
        let (mut annual_cos, mut annual_sin) = (Vec::new(), Vec::new());
        for k in 1..=annual_harmonics {
            let arg = harmonic_angle(t_index, k, ANNUAL_PERIOD);
            annual_cos.push(arg.cos());
            annual_sin.push(arg.sin());
        }
        let mut weekly_cos = [0.0; WEEKLY_HARMONICS];
        let mut weekly_sin = [0.0; WEEKLY_HARMONICS];
        for k in 1..=WEEKLY_HARMONICS {
            let arg = harmonic_angle(t_index, k, WEEKLY_PERIOD);
            weekly_cos[k - 1] = arg.cos();
            weekly_sin[k - 1] = arg.sin();
        }
        Self {
            annual_cos,
            annual_sin,
            weekly_cos,
            weekly_sin,
        }
    }
}

/// Part of `μ_t` that does not depend on the state.
#[inline]
pub fn mean_base<S: Real>(params: &EmissionParams<S>, day: &DayCovariates, design: &DayDesign) -> [S; 2] {
    let kg = params.k_gamma();
    let mut out = [S::zero(); 2];
    for (j, o) in out.iter_mut().enumerate() {
        let gamma = params.gamma[j].eval_features(&design.annual_cos[..kg], &design.annual_sin[..kg]);
        let delta = params.delta[j].eval_features(&design.weekly_cos, &design.weekly_sin);
        let w = S::c(day.w[j]);
        let wc = S::c(day.w_centered[j]);
        *o = params.alpha[j] + gamma + delta + (params.zeta[j][0] + params.zeta[j][1] * w) * wc;
    }
    out
}

/// Part of `(φ, ln τ1, ln τ2)` (before clamping) that does not depend on the state.
#[inline]
pub fn omega_base<S: Real>(params: &EmissionParams<S>, design: &DayDesign) -> [S; 3] {
    let kk = params.k_kappa();
    let mut out = [S::zero(); 3];
    for (i, o) in out.iter_mut().enumerate() {
        *o = params.eta[i] + params.kappa[i].eval_features(&design.annual_cos[..kk], &design.annual_sin[..kk]);
    }
    out
}

fn check_state(day: &DayCovariates, state: usize) -> Result<()> {
    if state > NORMAL {
        return Err(Error::InvalidInput(format!("state index {state} out of range")));
    }
    if day.is_holiday() != (state == HOLIDAY) {
        return Err(Error::InvalidInput(format!(
            "state {} is inconsistent with {} being {}a holiday",
            state + 1,
            day.date,
            if day.is_holiday() { "" } else { "not " }
        )));
    }
    Ok(())
}

/// Adds the state-dependent holiday effect to a precomputed base mean.
#[inline]
pub fn mean_from_base<S: Real>(params: &EmissionParams<S>, base: [S; 2], day: &DayCovariates, state: usize) -> [S; 2] {
    let r = day.r.index();
    let mut out = base;
    for (j, o) in out.iter_mut().enumerate() {
        let b = state_weight(params.rho_beta[j], state, day.n, day.p);
        *o = *o + b * params.beta[j][r];
    }
    out
}

/// `μ_t` for the given (zero-based) state.
pub fn mean_vector<S: Real>(params: &EmissionParams<S>, day: &DayCovariates, state: usize) -> Result<[S; 2]> {
    check_state(day, state)?;
    let kg = params.k_gamma();
    let mut base = [S::zero(); 2];
    for (j, b) in base.iter_mut().enumerate() {
        let gamma = fourier_sum(&params.gamma[j], day.t_index, ANNUAL_PERIOD, kg);
        let delta = fourier_sum(&params.delta[j], day.t_index, WEEKLY_PERIOD, WEEKLY_HARMONICS);
        let w = S::c(day.w[j]);
        let wc = S::c(day.w_centered[j]);
        *b = params.alpha[j] + gamma + delta + (params.zeta[j][0] + params.zeta[j][1] * w) * wc;
    }
    Ok(mean_from_base(params, base, day, state))
}

/// Square-root-free Cholesky factors of `Ω_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionComponents<S> {
    /// Regression coefficient of the second error on the first.
    pub phi: S,
    /// Marginal precision of the first error and conditional precision of
    /// the second.
    pub tau: [S; 2],
}

impl<S: Real> PrecisionComponents<S> {
    /// From `(φ, ln τ1, ln τ2)` with the log-precisions clamped.
    pub fn from_omega(omega: [S; 3]) -> Self {
        let bound = S::c(LOG_PRECISION_BOUND);
        Self {
            phi: omega[0],
            tau: [
                omega[1].max(-bound).min(bound).exp(),
                omega[2].max(-bound).min(bound).exp(),
            ],
        }
    }

    pub fn log_det(&self) -> S {
        self.tau[0].ln() + self.tau[1].ln()
    }

    /// `(Te)' D⁻¹ (Te) = τ1 e1² + τ2 (e2 - φ e1)²`.
    #[inline]
    pub fn quad(&self, e: [S; 2]) -> S {
        let u2 = e[1] - self.phi * e[0];
        self.tau[0] * e[0] * e[0] + self.tau[1] * u2 * u2
    }
}

#[inline]
pub fn omega_from_base<S: Real>(params: &EmissionParams<S>, base: [S; 3], day: &DayCovariates, state: usize) -> [S; 3] {
    let w = state_weight(params.rho_theta, state, day.n, day.p);
    [
        base[0] + w * params.theta[0],
        base[1] + w * params.theta[1],
        base[2] + w * params.theta[2],
    ]
}

/// `(φ_t, τ_t1, τ_t2)` for the given (zero-based) state.
pub fn precision_components<S: Real>(
    params: &EmissionParams<S>,
    day: &DayCovariates,
    state: usize,
) -> Result<PrecisionComponents<S>> {
    check_state(day, state)?;
    let kk = params.k_kappa();
    let mut base = [S::zero(); 3];
    for (i, b) in base.iter_mut().enumerate() {
        *b = params.eta[i] + fourier_sum(&params.kappa[i], day.t_index, ANNUAL_PERIOD, kk);
    }
    Ok(PrecisionComponents::from_omega(omega_from_base(params, base, day, state)))
}

/// `Ω = T' D⁻¹ T` with `T = [[1, 0], [-φ, 1]]` and `D = diag(1/τ1, 1/τ2)`.
pub fn precision_matrix<S: Real>(pc: &PrecisionComponents<S>) -> Result<Mat2<S>> {
    if !(pc.tau[0] > S::zero() && pc.tau[1] > S::zero()) {
        return Err(Error::Support(format!("precisions {:?} must be positive", pc.tau)));
    }
    Ok(precision_matrix_unchecked(pc))
}

#[inline]
pub(crate) fn precision_matrix_unchecked<S: Real>(pc: &PrecisionComponents<S>) -> Mat2<S> {
    let (phi, t1, t2) = (pc.phi, pc.tau[0], pc.tau[1]);
    let off = -phi * t2;
    [[t1 + phi * phi * t2, off], [off, t2]]
}

/// Solves `V = Ψ V Ψ' + Q` for symmetric `Q` through the 3×3 linear system in
/// `(V11, V12, V22)`.
pub fn solve_lyapunov<S: Real>(psi: &Mat2<S>, q: &Mat2<S>) -> Result<Mat2<S>> {
    let (p11, p12, p21, p22) = (psi[0][0], psi[0][1], psi[1][0], psi[1][1]);
    let two = S::c(2.0);
    let o = S::one();
    let a = [
        [o - p11 * p11, -two * p11 * p12, -p12 * p12],
        [-p11 * p21, o - (p11 * p22 + p12 * p21), -p12 * p22],
        [-p21 * p21, -two * p21 * p22, o - p22 * p22],
    ];
    let rhs = [q[0][0], S::c(0.5) * (q[0][1] + q[1][0]), q[1][1]];
    let x = solve3(a, rhs)
        .ok_or_else(|| Error::Numerical("singular Lyapunov system: Ψ is not stable".into()))?;
    Ok([[x[0], x[1]], [x[1], x[2]]])
}

/// Stationary variance `V(Ψ, Ω)` of the mean-centred process.
pub fn stationary_variance<S: Real>(psi: &Mat2<S>, omega: &Mat2<S>) -> Result<Mat2<S>> {
    let eig = sym_eigenvalues(psi);
    if !(eig[0].abs() < S::one() && eig[1].abs() < S::one()) {
        return Err(Error::Support("Ψ must have eigenvalues inside the unit disc".into()));
    }
    if !(omega[0][0] > S::zero() && mat2_det(omega) > S::zero()) {
        return Err(Error::Support("Ω must be positive definite".into()));
    }
    solve_lyapunov(psi, &mat2_inv(omega))
}

/// Bivariate normal log-density with covariance `cov`.
#[inline]
pub fn mvn2_log_density_cov<S: Real>(x: [S; 2], mean: [S; 2], cov: &Mat2<S>) -> S {
    let e = [x[0] - mean[0], x[1] - mean[1]];
    let ln_2pi = S::c((2.0 * std::f64::consts::PI).ln());
    -ln_2pi - S::c(0.5) * mat2_det(cov).ln() - S::c(0.5) * quad_form(&mat2_inv(cov), e)
}

/// Bivariate normal log-density with precision given by Cholesky factors.
#[inline]
pub fn mvn2_log_density_prec<S: Real>(x: [S; 2], mean: [S; 2], pc: &PrecisionComponents<S>) -> S {
    let e = [x[0] - mean[0], x[1] - mean[1]];
    let ln_2pi = S::c((2.0 * std::f64::consts::PI).ln());
    -ln_2pi + S::c(0.5) * pc.log_det() - S::c(0.5) * pc.quad(e)
}

/// The previous day's observation, state and covariates.
#[derive(Debug, Clone, Copy)]
pub struct PreviousDay<'a> {
    pub y: [f64; 2],
    pub state: usize,
    pub day: &'a DayCovariates,
}

/// `ln p(y_t | y_{t-1}, s_{t-1}, s_t)`, or `ln p(y_1 | s_1)` when `prev` is
/// `None`.
pub fn log_emission_density<S: Real>(
    params: &EmissionParams<S>,
    y: [f64; 2],
    state: usize,
    day: &DayCovariates,
    prev: Option<PreviousDay<'_>>,
) -> Result<S> {
    let psi = params.psi()?;
    let mu = mean_vector(params, day, state)?;
    let pc = precision_components(params, day, state)?;
    let y = [S::c(y[0]), S::c(y[1])];
    match prev {
        None => {
            let omega = precision_matrix(&pc)?;
            let v = stationary_variance(&psi, &omega)?;
            Ok(mvn2_log_density_cov(y, mu, &v))
        }
        Some(prev) => {
            let mu_prev = mean_vector(params, prev.day, prev.state)?;
            let d = [S::c(prev.y[0]) - mu_prev[0], S::c(prev.y[1]) - mu_prev[1]];
            let carried = [
                psi[0][0] * d[0] + psi[0][1] * d[1],
                psi[1][0] * d[0] + psi[1][1] * d[1],
            ];
            let mean = [mu[0] + carried[0], mu[1] + carried[1]];
            Ok(mvn2_log_density_prec(y, mean, &pc))
        }
    }
}
