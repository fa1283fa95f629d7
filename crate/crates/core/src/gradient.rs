//! Analytic gradient of the observed-data log-likelihood.
//!
//! The score equals the expectation of the complete-data score under the
//! smoothed distribution of the augmented states, so one forward-backward
//! pass gives the pair weights and a second sweep accumulates local
//! derivatives of the transition and emission log-densities. First-day
//! terms go through the adjoint of the stationary-variance equation.

use crate::emission::{
    state_weight, weight_exponent, EmissionParams, WEEKLY_HARMONICS, LOG_PRECISION_BOUND,
};
use crate::error::Result;
use crate::inference::{
    all_day_states, forward_from_tables, log_emission_table_from_states, log_transition_table,
    scaled_forward_backward, smooth_pairs_from_tables, state_allowed, transition_table, FitData,
};
use crate::linalg::{mat2_inv, mat2_mul, Mat2};
use crate::emission::{precision_matrix_unchecked, psi_from_xi, solve_lyapunov};
use crate::params::{ModelParams, ParamLayout};
use crate::scalar::sigmoid;
use crate::state_model::{
    free_logits, post_exit_covariate, pre_entry_covariate, ModelMode, NORMAL, N_PAIRS, N_STATES, PAIRS, POST, PRE,
};
use crate::state_model::HOLIDAY;

/// Pair weights below this are skipped.
const WEIGHT_FLOOR: f64 = 1e-300;

/// Log-likelihood, adding its gradient with respect to the natural-scale
/// coordinates of `layout` into `grad`. Returns `-∞` (and leaves `grad`
/// untouched) when the likelihood is zero.
pub fn log_likelihood_grad(
    data: &FitData,
    params: &ModelParams<f64>,
    layout: &ParamLayout,
    grad: &mut [f64],
) -> Result<f64> {
    let e = &params.emission;
    let states = all_day_states(e, data)?;
    let lf = log_emission_table_from_states(e, data, &states)?;
    let tr = transition_table(&params.transition, data);
    let (ll, w) = match scaled_forward_backward(&tr, &lf, true) {
        Some((ll, w)) => (ll, w.expect("pairs requested")),
        None => {
            let lt = log_transition_table(&params.transition, data);
            let msgs = forward_from_tables(&lt, &lf);
            let ll = msgs.log_likelihood();
            if !ll.is_finite() {
                return Ok(ll);
            }
            (ll, smooth_pairs_from_tables(&msgs, &lt, &lf))
        }
    };
    let n = data.len();
    let psi = psi_from_xi(e.xi)?;

    // adjoints of the state-specific means and (φ, ω2, ω3)
    let mut mbar = vec![[[0.0; 2]; N_STATES]; n];
    let mut obar = vec![[[0.0; 3]; N_STATES]; n];
    let mut psi_bar: Mat2<f64> = [[0.0; 2]; 2];

    // first day: aggregate over the day-0 state
    let mut w0 = [0.0; N_STATES];
    for (k, &(_, b)) in PAIRS.iter().enumerate() {
        w0[b] += w[0][k];
    }
    for b in 0..N_STATES {
        if w0[b] <= WEIGHT_FLOOR {
            continue;
        }
        first_day_adjoint(
            &psi,
            &states[0].pc[b],
            &states[0].omega[b],
            data.y[0],
            states[0].mu[b],
            w0[b],
            &mut mbar[0][b],
            &mut obar[0][b],
            &mut psi_bar,
        )?;
    }

    for t in 1..n {
        let (cur, prev) = (&states[t], &states[t - 1]);
        let y = data.y[t];
        let yp = data.y[t - 1];
        for (k, &(a, b)) in PAIRS.iter().enumerate() {
            let wk = w[t][k];
            if wk <= WEIGHT_FLOOR {
                continue;
            }
            let d = [yp[0] - prev.mu[a][0], yp[1] - prev.mu[a][1]];
            let e_ = [
                y[0] - cur.mu[b][0] - psi[0][0] * d[0] - psi[0][1] * d[1],
                y[1] - cur.mu[b][1] - psi[1][0] * d[0] - psi[1][1] * d[1],
            ];
            let pc = &cur.pc[b];
            let u1 = e_[0];
            let u2 = e_[1] - pc.phi * e_[0];
            let (t1, t2) = (pc.tau[0], pc.tau[1]);
            // ∂ log f / ∂e
            let g = [-(t1 * u1 - pc.phi * t2 * u2), -(t2 * u2)];
            mbar[t][b][0] -= wk * g[0];
            mbar[t][b][1] -= wk * g[1];
            let pg = [psi[0][0] * g[0] + psi[1][0] * g[1], psi[0][1] * g[0] + psi[1][1] * g[1]];
            mbar[t - 1][a][0] += wk * pg[0];
            mbar[t - 1][a][1] += wk * pg[1];
            for r in 0..2 {
                for c in 0..2 {
                    psi_bar[r][c] -= wk * g[r] * d[c];
                }
            }
            let om = &cur.omega[b];
            obar[t][b][0] += wk * t2 * u2 * u1;
            if om[1].abs() < LOG_PRECISION_BOUND {
                obar[t][b][1] += wk * (0.5 - 0.5 * t1 * u1 * u1);
            }
            if om[2].abs() < LOG_PRECISION_BOUND {
                obar[t][b][2] += wk * (0.5 - 0.5 * t2 * u2 * u2);
            }
        }
    }

    // Ψ = [[on, off], [off, on]] with on = ξ1 + ξ2 - 1, off = ξ1 - ξ2
    let d_on = psi_bar[0][0] + psi_bar[1][1];
    let d_off = psi_bar[0][1] + psi_bar[1][0];
    grad[layout.xi(0)] += d_on + d_off;
    grad[layout.xi(1)] += d_on - d_off;

    accumulate_emission(data, e, layout, &mbar, &obar, grad);
    if data.mode == ModelMode::FourState {
        accumulate_transition(data, params, layout, &w, grad);
    }
    Ok(ll)
}

/// Adjoint of `ln N(y; μ, V(Ψ, Ω⁻¹))` with weight `w`.
#[allow(clippy::too_many_arguments)]
fn first_day_adjoint(
    psi: &Mat2<f64>,
    pc: &crate::emission::PrecisionComponents<f64>,
    omega: &[f64; 3],
    y: [f64; 2],
    mu: [f64; 2],
    w: f64,
    mbar: &mut [f64; 2],
    obar: &mut [f64; 3],
    psi_bar: &mut Mat2<f64>,
) -> Result<()> {
    let om = precision_matrix_unchecked(pc);
    let q = mat2_inv(&om);
    let v = solve_lyapunov(psi, &q)?;
    let vi = mat2_inv(&v);
    let e = [y[0] - mu[0], y[1] - mu[1]];
    let vie = [vi[0][0] * e[0] + vi[0][1] * e[1], vi[1][0] * e[0] + vi[1][1] * e[1]];
    mbar[0] += w * vie[0];
    mbar[1] += w * vie[1];
    let mut gbar = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            gbar[r][c] = 0.5 * (vie[r] * vie[c] - vi[r][c]);
        }
    }
    // Λ = Ψ' Λ Ψ + Ḡ
    let psi_t = [[psi[0][0], psi[1][0]], [psi[0][1], psi[1][1]]];
    let lam = solve_lyapunov(&psi_t, &gbar)?;
    let dpsi = mat2_mul(&mat2_mul(&lam, psi), &v);
    for r in 0..2 {
        for c in 0..2 {
            psi_bar[r][c] += w * 2.0 * dpsi[r][c];
        }
    }
    let h = mat2_mul(&mat2_mul(&q, &lam), &q);
    let h = [[-h[0][0], -h[0][1]], [-h[1][0], -h[1][1]]];
    let h12 = 0.5 * (h[0][1] + h[1][0]);
    let (phi, t1, t2) = (pc.phi, pc.tau[0], pc.tau[1]);
    let d_tau1 = h[0][0];
    let d_tau2 = h[0][0] * phi * phi - 2.0 * h12 * phi + h[1][1];
    let d_phi = 2.0 * h[0][0] * phi * t2 - 2.0 * h12 * t2;
    obar[0] += w * d_phi;
    if omega[1].abs() < LOG_PRECISION_BOUND {
        obar[1] += w * d_tau1 * t1;
    }
    if omega[2].abs() < LOG_PRECISION_BOUND {
        obar[2] += w * d_tau2 * t2;
    }
    Ok(())
}

fn accumulate_emission(
    data: &FitData,
    e: &EmissionParams<f64>,
    layout: &ParamLayout,
    mbar: &[[[f64; 2]; N_STATES]],
    obar: &[[[f64; 3]; N_STATES]],
    grad: &mut [f64],
) {
    let (kg, kk) = (e.k_gamma(), e.k_kappa());
    for (t, day) in data.cov.days.iter().enumerate() {
        let des = &data.design[t];
        let r = day.r.index();
        for j in 0..2 {
            let mt: f64 = mbar[t].iter().map(|m| m[j]).sum();
            if mt != 0.0 {
                grad[layout.alpha(j)] += mt;
                for k in 0..kg {
                    grad[layout.gamma(j, 0, k)] += mt * des.annual_cos[k];
                    grad[layout.gamma(j, 1, k)] += mt * des.annual_sin[k];
                }
                for k in 0..WEEKLY_HARMONICS {
                    grad[layout.delta(j, 0, k)] += mt * des.weekly_cos[k];
                    grad[layout.delta(j, 1, k)] += mt * des.weekly_sin[k];
                }
                grad[layout.zeta(j, 0)] += mt * day.w_centered[j];
                grad[layout.zeta(j, 1)] += mt * day.w[j] * day.w_centered[j];
            }
            let rho = e.rho_beta[j];
            for s in [PRE, HOLIDAY, POST] {
                let m = mbar[t][s][j];
                if m == 0.0 {
                    continue;
                }
                let wt = state_weight(rho, s, day.n, day.p);
                grad[layout.beta(j, r)] += m * wt;
                if let Some(k) = weight_exponent(s, day.n, day.p) {
                    if k > 0 {
                        grad[layout.rho_beta(j)] += m * e.beta[j][r] * k as f64 * wt / rho;
                    }
                }
            }
        }
        for i in 0..3 {
            let ot: f64 = obar[t].iter().map(|o| o[i]).sum();
            if ot != 0.0 {
                grad[layout.eta(i)] += ot;
                for k in 0..kk {
                    grad[layout.kappa(i, 0, k)] += ot * des.annual_cos[k];
                    grad[layout.kappa(i, 1, k)] += ot * des.annual_sin[k];
                }
            }
            let rho = e.rho_theta;
            for s in [PRE, HOLIDAY, POST] {
                let o = obar[t][s][i];
                if o == 0.0 {
                    continue;
                }
                let wt = state_weight(rho, s, day.n, day.p);
                grad[layout.theta(i)] += o * wt;
                if let Some(k) = weight_exponent(s, day.n, day.p) {
                    if k > 0 {
                        grad[layout.rho_theta()] += o * e.theta[i] * k as f64 * wt / rho;
                    }
                }
            }
        }
    }
}

fn accumulate_transition(
    data: &FitData,
    params: &ModelParams<f64>,
    layout: &ParamLayout,
    w: &[[f64; N_PAIRS]],
    grad: &mut [f64],
) {
    let tr = &params.transition;
    for (t, day) in data.cov.days.iter().enumerate() {
        if day.is_holiday() {
            continue;
        }
        let [x41, x34, x23] = free_logits(tr, day.n, day.p);
        let (l41, l34, l23) = (sigmoid(x41), sigmoid(x34), sigmoid(x23));
        let (mut g41, mut g34, mut g23) = (0.0, 0.0, 0.0);
        for (k, &(a, b)) in PAIRS.iter().enumerate() {
            let wk = w[t][k];
            if wk == 0.0 || !state_allowed(false, b, data.mode) {
                continue;
            }
            match (a, b) {
                (NORMAL, PRE) => g41 += wk * (1.0 - l41),
                (NORMAL, NORMAL) => g41 -= wk * l41,
                (HOLIDAY, POST) => g23 += wk * (1.0 - l23),
                (HOLIDAY, NORMAL) => g23 -= wk * l23,
                (POST, NORMAL) => g34 += wk * (1.0 - l34),
                (POST, POST) => g34 -= wk * l34,
                _ => {}
            }
        }
        let ind = |c: bool| if c { 1.0 } else { 0.0 };
        grad[layout.nu(0)] += g41;
        grad[layout.nu(1)] += g41 * pre_entry_covariate(day.n);
        grad[layout.nu(2)] += g34;
        grad[layout.nu(3)] += g34 * post_exit_covariate(day.p);
        grad[layout.nu(4)] += g34 * ind(day.n == 1);
        grad[layout.nu(5)] += g23;
        grad[layout.nu(6)] += g23 * ind(day.n == 2);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::{build_covariates, HolidayCalendar, HolidayType, SeasonalCwvBaseline};
    use crate::inference::log_likelihood;
    use crate::prior::{default_hyperparameters_with, sample_prior, PriorPreset};
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};

    fn d(y: i32, m: u32, dd: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, dd).unwrap()
    }

    fn data(mode: ModelMode, days: u64, seed: u64) -> FitData {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let start = d(2021, 3, 10);
        let cal = HolidayCalendar::new(vec![
            (d(2021, 3, 1), HolidayType::Easter),
            (d(2021, 3, 13), HolidayType::Other),
            (d(2021, 3, 14), HolidayType::Other),
            (d(2021, 3, 19), HolidayType::Christmas),
            (d(2021, 3, 23), HolidayType::Easter),
            (d(2021, 4, 30), HolidayType::Other),
        ])
        .unwrap();
        let dates: Vec<_> = (0..days).map(|i| start + chrono::Days::new(i)).collect();
        let cwv: Vec<[f64; 2]> = dates.iter().map(|_| [rng.random_range(5.0..10.0), rng.random_range(5.0..10.0)]).collect();
        let cov = build_covariates(&dates, &cal, &cwv, &SeasonalCwvBaseline::constant([7.0, 7.5])).unwrap();
        let y = dates.iter().map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        FitData::with_harmonics(y, cov, mode, 4).unwrap()
    }

    fn check(mode: ModelMode, seed: u64) {
        let hyper = default_hyperparameters_with(PriorPreset::Weak, 3, 4);
        let layout = hyper.layout();
        let fd_data = data(mode, 20, seed);
        let mut p = sample_prior(&hyper, seed);
        // keep the scale of the problem moderate
        p.emission.alpha = [0.1, -0.2];
        p.emission.eta = [0.3, 0.5, 0.2];
        p.emission.theta = [0.2, -0.3, 0.4];
        p.emission.rho_beta = [0.6, 0.4];
        p.emission.rho_theta = 0.7;
        let x = layout.to_natural(&p).unwrap();
        let mut g = vec![0.0; layout.dim()];
        let ll = log_likelihood_grad(&fd_data, &p, &layout, &mut g).unwrap();
        assert!((ll - log_likelihood(&fd_data, &p).unwrap()).abs() < 1e-9 * ll.abs());
        for i in 0..layout.dim() {
            let h = 1e-4 * x[i].abs().max(1.0);
            let mut up = x.clone();
            let mut dn = x.clone();
            up[i] += h;
            dn[i] -= h;
            let fu = log_likelihood(&fd_data, &layout.from_natural(&up)).unwrap();
            let fdn = log_likelihood(&fd_data, &layout.from_natural(&dn)).unwrap();
            let fd = (fu - fdn) / (2.0 * h);
            let tol = 1e-5 * fd.abs().max(g[i].abs()).max(1.0);
            assert!((fd - g[i]).abs() < tol, "{mode:?} seed {seed} {}: fd {fd} vs {}", layout.names()[i], g[i]);
        }
    }

    #[test]
    fn four_state_gradient_matches_finite_differences() {
        for seed in 0..4 {
            check(ModelMode::FourState, seed);
        }
    }

    #[test]
    fn two_state_gradient_matches_finite_differences() {
        for seed in 0..2 {
            check(ModelMode::TwoState, seed);
        }
    }
}
