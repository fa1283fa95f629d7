//! Hierarchical prior over the model parameters.
//!
//! Region-specific mean coefficients share a latent mean across the two
//! regions, so that `Var = v` and `Cor = r` marginally. The decay rates are
//! tied together on the logit scale through a two-level hierarchy; the
//! precision-model coefficients get independent normals and the transition
//! logit coefficients independent normals with variance at most one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::emission::{Fourier, DEFAULT_K_GAMMA, DEFAULT_K_KAPPA, WEEKLY_HARMONICS};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, spd_inverse};
use crate::params::{ModelParams, ParamLayout};
use crate::scalar::{log_sigmoid, sigmoid, Real};
use crate::state_model::TransitionParams;

/// Latent means of the hierarchical priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperLatents<S> {
    pub mu_alpha: S,
    pub mu_zeta: [S; 2],
    /// Shared weekly coefficients (three harmonics).
    pub mu_delta: Fourier<S>,
    /// Shared annual coefficients.
    pub mu_gamma: Fourier<S>,
    pub mu_beta: [S; 3],
    /// Shared logit decay of the two mean holiday effects.
    pub rho_tilde_beta: S,
    /// Top-level logit decay mean.
    pub mu_rho_tilde: S,
}

impl<S: Real> HyperLatents<S> {
    pub fn zeros(k_gamma: usize) -> Self {
        Self {
            mu_alpha: S::zero(),
            mu_zeta: [S::zero(); 2],
            mu_delta: Fourier::zeros(WEEKLY_HARMONICS),
            mu_gamma: Fourier::zeros(k_gamma),
            mu_beta: [S::zero(); 3],
            rho_tilde_beta: S::zero(),
            mu_rho_tilde: S::zero(),
        }
    }

    pub fn cast<T: Real>(&self) -> HyperLatents<T> {
        let c = |x: S| T::c(x.f64());
        HyperLatents {
            mu_alpha: c(self.mu_alpha),
            mu_zeta: self.mu_zeta.map(c),
            mu_delta: self.mu_delta.cast(),
            mu_gamma: self.mu_gamma.cast(),
            mu_beta: self.mu_beta.map(c),
            rho_tilde_beta: c(self.rho_tilde_beta),
            mu_rho_tilde: c(self.mu_rho_tilde),
        }
    }
}

/// Marginal mean, variance and between-region correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HierNormal {
    pub mean: f64,
    pub var: f64,
    pub corr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorPreset {
    Weak,
    PaperLike,
}

impl PriorPreset {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "weak" => Some(Self::Weak),
            "paper-like" | "paper_like" => Some(Self::PaperLike),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Weak => "weak",
            Self::PaperLike => "paper-like",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub k_gamma: usize,
    pub k_kappa: usize,
    /// Means of `ν` in the order `411, 412, 341, 342, 343, 231, 232`.
    pub nu_mean: [f64; 7],
    pub nu_var: [f64; 7],
    pub xi_a: [f64; 2],
    pub xi_b: [f64; 2],
    pub alpha: HierNormal,
    pub zeta: [HierNormal; 2],
    pub delta_var: f64,
    pub delta_corr: f64,
    /// `v_{γ,k}` for `k = 1..K_γ`, non-increasing.
    pub gamma_var: Vec<f64>,
    pub gamma_corr: f64,
    /// Diagonal of the compound-symmetric `V_β`.
    pub beta_var: f64,
    /// Off-diagonal correlation of `V_β` between holiday types.
    pub beta_type_corr: f64,
    /// Between-region correlation `r_β`.
    pub beta_corr: f64,
    pub rho_mean: f64,
    pub rho_var: f64,
    pub rho_r1: f64,
    pub rho_r2: f64,
    pub eta_mean: [f64; 3],
    pub eta_var: [f64; 3],
    pub theta_var: [f64; 3],
    /// `v_{κ,i,k}`, one vector of length `K_κ` per `i`.
    pub kappa_var: [Vec<f64>; 3],
}

/// Documented defaults.
///
/// Both presets share the demand-model settings. `weak` centres every `ν` at
/// zero with unit variance; `paper-like` makes entry into the pre-holiday
/// state likely only on the last day or two before a holiday and makes the
/// post-holiday state short-lived.
pub fn default_hyperparameters(preset: PriorPreset) -> Hyperparameters {
    default_hyperparameters_with(preset, DEFAULT_K_GAMMA, DEFAULT_K_KAPPA)
}

pub fn default_hyperparameters_with(preset: PriorPreset, k_gamma: usize, k_kappa: usize) -> Hyperparameters {
    let nu_mean = match preset {
        PriorPreset::Weak => [0.0; 7],
        PriorPreset::PaperLike => [0.0, -40.0, 0.0, 30.0, 0.0, 0.0, 0.0],
    };
    let decay = |k: usize, scale: f64| (1..=k).map(|h| scale / (h * h) as f64).collect::<Vec<_>>();
    Hyperparameters {
        k_gamma,
        k_kappa,
        nu_mean,
        nu_var: [1.0; 7],
        xi_a: [2.0; 2],
        xi_b: [2.0; 2],
        alpha: HierNormal { mean: 0.0, var: 100.0, corr: 0.5 },
        zeta: [HierNormal { mean: 0.0, var: 1.0, corr: 0.5 }; 2],
        delta_var: 1.0,
        delta_corr: 0.5,
        gamma_var: decay(k_gamma, 1.0),
        gamma_corr: 0.5,
        beta_var: 1.0,
        beta_type_corr: 0.5,
        beta_corr: 0.5,
        rho_mean: 0.0,
        rho_var: 1.0,
        rho_r1: 0.8,
        rho_r2: 0.5,
        eta_mean: [0.0, 6.0, 6.0],
        eta_var: [1.0, 9.0, 9.0],
        theta_var: [1.0, 4.0, 4.0],
        kappa_var: [decay(k_kappa, 0.25), decay(k_kappa, 1.0), decay(k_kappa, 1.0)],
    }
}

impl Hyperparameters {
    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self.k_gamma, self.k_kappa)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        let pos = |v: f64| v > 0.0 && v.is_finite();
        let unit = |r: f64| r > 0.0 && r < 1.0;
        if self.gamma_var.len() != self.k_gamma {
            return bad("gamma.var must have K_γ entries");
        }
        if self.kappa_var.iter().any(|v| v.len() != self.k_kappa) {
            return bad("kappa.var must have K_κ entries per component");
        }
        if !self.nu_var.iter().all(|&v| pos(v) && v <= 1.0) {
            return bad("every nu variance must lie in (0, 1]");
        }
        if !self.nu_mean.iter().chain(&self.eta_mean).all(|m| m.is_finite())
            || !self.alpha.mean.is_finite()
            || !self.zeta.iter().all(|z| z.mean.is_finite())
            || !self.rho_mean.is_finite()
        {
            return bad("prior means must be finite");
        }
        if !self.xi_a.iter().chain(&self.xi_b).all(|&v| pos(v)) {
            return bad("xi beta shapes must be positive");
        }
        let hier = [self.alpha, self.zeta[0], self.zeta[1]];
        if !hier.iter().all(|h| pos(h.var) && unit(h.corr)) {
            return bad("alpha/zeta variances must be positive and correlations in (0,1)");
        }
        if !(pos(self.delta_var) && unit(self.delta_corr) && unit(self.gamma_corr)) {
            return bad("delta/gamma settings out of range");
        }
        if !self.gamma_var.iter().all(|&v| pos(v)) || self.gamma_var.windows(2).any(|w| w[1] > w[0]) {
            return bad("gamma variances must be positive and non-increasing in k");
        }
        if !(pos(self.beta_var) && unit(self.beta_type_corr) && unit(self.beta_corr)) {
            return bad("beta settings out of range");
        }
        if !(pos(self.rho_var) && unit(self.rho_r1) && unit(self.rho_r2)) {
            return bad("rho settings out of range");
        }
        if !self.eta_var.iter().chain(&self.theta_var).all(|&v| pos(v))
            || !self.kappa_var.iter().flatten().all(|&v| pos(v))
        {
            return bad("precision-model variances must be positive");
        }
        Ok(())
    }

    /// Compound-symmetric `V_β` as a 3×3 row-major array.
    pub fn beta_matrix(&self) -> [f64; 9] {
        let (v, c) = (self.beta_var, self.beta_type_corr);
        let mut m = [v * c; 9];
        for i in 0..3 {
            m[i * 4] = v;
        }
        m
    }
}

/// Mean of a normal term: a constant or another coordinate.
#[derive(Clone, Copy)]
enum Loc {
    Const(f64),
    Coord(usize),
}

struct Acc<'a, S> {
    x: &'a [S],
    lp: S,
    grad: Option<&'a mut [S]>,
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

impl<S: Real> Acc<'_, S> {
    fn normal(&mut self, i: usize, loc: Loc, var: f64) {
        let m = match loc {
            Loc::Const(m) => S::c(m),
            Loc::Coord(j) => self.x[j],
        };
        let z = self.x[i] - m;
        self.lp = self.lp - S::c(HALF_LN_2PI + 0.5 * var.ln()) - S::c(0.5 / var) * z * z;
        if let Some(g) = self.grad.as_deref_mut() {
            let d = z / S::c(var);
            g[i] = g[i] - d;
            if let Loc::Coord(j) = loc {
                g[j] = g[j] + d;
            }
        }
    }

    /// Trivariate normal with precision `prec` and `ln det(cov)`.
    fn mvn3(&mut self, idx: [usize; 3], mean: Option<[usize; 3]>, prec: &[f64], log_det_cov: f64) {
        let mut z = [S::zero(); 3];
        for r in 0..3 {
            z[r] = self.x[idx[r]] - mean.map_or(S::zero(), |m| self.x[m[r]]);
        }
        let mut pz = [S::zero(); 3];
        for r in 0..3 {
            for c in 0..3 {
                pz[r] = pz[r] + S::c(prec[r * 3 + c]) * z[c];
            }
        }
        let q = z[0] * pz[0] + z[1] * pz[1] + z[2] * pz[2];
        self.lp = self.lp - S::c(3.0 * HALF_LN_2PI + 0.5 * log_det_cov) - S::c(0.5) * q;
        if let Some(g) = self.grad.as_deref_mut() {
            for r in 0..3 {
                g[idx[r]] = g[idx[r]] - pz[r];
                if let Some(m) = mean {
                    g[m[r]] = g[m[r]] + pz[r];
                }
            }
        }
    }

    /// Beta density of `σ(x_i)` plus the logit Jacobian.
    fn beta_logit(&mut self, i: usize, a: f64, b: f64) {
        let x = self.x[i];
        let ln_beta = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
        self.lp = self.lp + S::c(a) * log_sigmoid(x) + S::c(b) * log_sigmoid(-x) - S::c(ln_beta);
        if let Some(g) = self.grad.as_deref_mut() {
            let s = sigmoid(x);
            g[i] = g[i] + S::c(a) * (S::one() - s) - S::c(b) * s;
        }
    }
}

/// Precision and `ln det` of `scale · V_β`.
fn beta_precision(hyper: &Hyperparameters, scale: f64) -> (Vec<f64>, f64) {
    let cov: Vec<f64> = hyper.beta_matrix().iter().map(|v| v * scale).collect();
    let l = cholesky(&cov, 3).expect("V_β is positive definite");
    let log_det = 2.0 * (0..3).map(|i| l[i * 4].ln()).sum::<f64>();
    (spd_inverse(&cov, 3).expect("V_β is positive definite"), log_det)
}

/// Log-density of the unconstrained vector (prior times the Jacobian of the
/// logit transforms), optionally adding its gradient into `grad`.
pub fn log_prior_unconstrained<S: Real>(
    layout: &ParamLayout,
    x: &[S],
    hyper: &Hyperparameters,
    grad: Option<&mut [S]>,
) -> S {
    let l = layout;
    let mut acc = Acc { x, lp: S::zero(), grad };
    for i in 0..7 {
        acc.normal(l.nu(i), Loc::Const(hyper.nu_mean[i]), hyper.nu_var[i]);
    }
    for i in 0..2 {
        acc.beta_logit(l.xi(i), hyper.xi_a[i], hyper.xi_b[i]);
    }

    let a = hyper.alpha;
    for j in 0..2 {
        acc.normal(l.alpha(j), Loc::Coord(l.mu_alpha()), (1.0 - a.corr) * a.var);
    }
    acc.normal(l.mu_alpha(), Loc::Const(a.mean), a.corr * a.var);

    for i in 0..2 {
        let z = hyper.zeta[i];
        for j in 0..2 {
            acc.normal(l.zeta(j, i), Loc::Coord(l.mu_zeta(i)), (1.0 - z.corr) * z.var);
        }
        acc.normal(l.mu_zeta(i), Loc::Const(z.mean), z.corr * z.var);
    }

    let (vd, rd) = (hyper.delta_var, hyper.delta_corr);
    for m in 0..2 {
        for k in 0..WEEKLY_HARMONICS {
            for j in 0..2 {
                acc.normal(l.delta(j, m, k), Loc::Coord(l.mu_delta(m, k)), (1.0 - rd) * vd);
            }
            acc.normal(l.mu_delta(m, k), Loc::Const(0.0), rd * vd);
        }
    }

    let rg = hyper.gamma_corr;
    for m in 0..2 {
        for k in 0..l.k_gamma {
            let vg = hyper.gamma_var[k];
            for j in 0..2 {
                acc.normal(l.gamma(j, m, k), Loc::Coord(l.mu_gamma(m, k)), (1.0 - rg) * vg);
            }
            acc.normal(l.mu_gamma(m, k), Loc::Const(0.0), rg * vg);
        }
    }

    let rb = hyper.beta_corr;
    let (p_within, ld_within) = beta_precision(hyper, 1.0 - rb);
    let (p_top, ld_top) = beta_precision(hyper, rb);
    let mu_beta = [l.mu_beta(0), l.mu_beta(1), l.mu_beta(2)];
    for j in 0..2 {
        acc.mvn3([l.beta(j, 0), l.beta(j, 1), l.beta(j, 2)], Some(mu_beta), &p_within, ld_within);
    }
    acc.mvn3(mu_beta, None, &p_top, ld_top);

    let (v, r1, r2) = (hyper.rho_var, hyper.rho_r1, hyper.rho_r2);
    for j in 0..2 {
        acc.normal(l.rho_beta(j), Loc::Coord(l.rho_tilde_beta()), (1.0 - r1) * v);
    }
    acc.normal(l.rho_tilde_beta(), Loc::Coord(l.mu_rho_tilde()), (1.0 - r2) * r1 * v);
    acc.normal(l.rho_theta(), Loc::Coord(l.mu_rho_tilde()), (1.0 - r2) * r1 * v);
    acc.normal(l.mu_rho_tilde(), Loc::Const(hyper.rho_mean), r1 * r2 * v);

    for i in 0..3 {
        acc.normal(l.eta(i), Loc::Const(hyper.eta_mean[i]), hyper.eta_var[i]);
        acc.normal(l.theta(i), Loc::Const(0.0), hyper.theta_var[i]);
        for m in 0..2 {
            for k in 0..l.k_kappa {
                acc.normal(l.kappa(i, m, k), Loc::Const(0.0), hyper.kappa_var[i][k]);
            }
        }
    }
    acc.lp
}

/// Prior log-density in the natural parameterisation; `-∞` outside the
/// support.
pub fn log_prior<S: Real>(params: &ModelParams<S>, hyper: &Hyperparameters) -> S {
    let layout = hyper.layout();
    match layout.unconstrain(params) {
        Ok(x) => log_prior_unconstrained(&layout, &x, hyper, None) - layout.log_jacobian(&x),
        Err(_) => S::neg_infinity(),
    }
}

fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Exact draw from the prior with a seeded stream.
pub fn sample_prior(hyper: &Hyperparameters, seed: u64) -> ModelParams<f64> {
    sample_prior_with(hyper, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn sample_prior_with<R: Rng + ?Sized>(hyper: &Hyperparameters, rng: &mut R) -> ModelParams<f64> {
    let layout = hyper.layout();
    let l = &layout;
    let mut x = vec![0.0; l.dim()];
    let normal = |rng: &mut R, mean: f64, var: f64| mean + var.sqrt() * std_normal(rng);

    for i in 0..7 {
        x[l.nu(i)] = normal(rng, hyper.nu_mean[i], hyper.nu_var[i]);
    }
    for i in 0..2 {
        let beta = Beta::new(hyper.xi_a[i], hyper.xi_b[i]).expect("valid beta shapes");
        let mut xi: f64 = beta.sample(rng);
        // keep the draw strictly inside the open interval
        xi = xi.clamp(1e-12, 1.0 - 1e-12);
        x[l.xi(i)] = xi;
    }

    let a = hyper.alpha;
    x[l.mu_alpha()] = normal(rng, a.mean, a.corr * a.var);
    for j in 0..2 {
        x[l.alpha(j)] = normal(rng, x[l.mu_alpha()], (1.0 - a.corr) * a.var);
    }
    for i in 0..2 {
        let z = hyper.zeta[i];
        x[l.mu_zeta(i)] = normal(rng, z.mean, z.corr * z.var);
        for j in 0..2 {
            x[l.zeta(j, i)] = normal(rng, x[l.mu_zeta(i)], (1.0 - z.corr) * z.var);
        }
    }
    let (vd, rd) = (hyper.delta_var, hyper.delta_corr);
    for m in 0..2 {
        for k in 0..WEEKLY_HARMONICS {
            x[l.mu_delta(m, k)] = normal(rng, 0.0, rd * vd);
            for j in 0..2 {
                x[l.delta(j, m, k)] = normal(rng, x[l.mu_delta(m, k)], (1.0 - rd) * vd);
            }
        }
    }
    let rg = hyper.gamma_corr;
    for m in 0..2 {
        for k in 0..l.k_gamma {
            let vg = hyper.gamma_var[k];
            x[l.mu_gamma(m, k)] = normal(rng, 0.0, rg * vg);
            for j in 0..2 {
                x[l.gamma(j, m, k)] = normal(rng, x[l.mu_gamma(m, k)], (1.0 - rg) * vg);
            }
        }
    }

    let chol = cholesky(&hyper.beta_matrix(), 3).expect("V_β is positive definite");
    let mvn = |rng: &mut R, scale: f64| {
        let z = [std_normal(rng), std_normal(rng), std_normal(rng)];
        let mut out = [0.0; 3];
        for r in 0..3 {
            for c in 0..=r {
                out[r] += chol[r * 3 + c] * z[c];
            }
            out[r] *= scale.sqrt();
        }
        out
    };
    let rb = hyper.beta_corr;
    let mu_beta = mvn(rng, rb);
    for r in 0..3 {
        x[l.mu_beta(r)] = mu_beta[r];
    }
    for j in 0..2 {
        let dev = mvn(rng, 1.0 - rb);
        for r in 0..3 {
            x[l.beta(j, r)] = mu_beta[r] + dev[r];
        }
    }

    let (v, r1, r2) = (hyper.rho_var, hyper.rho_r1, hyper.rho_r2);
    let mu_rho = normal(rng, hyper.rho_mean, r1 * r2 * v);
    let rho_beta = normal(rng, mu_rho, (1.0 - r2) * r1 * v);
    let rho_theta = normal(rng, mu_rho, (1.0 - r2) * r1 * v);
    x[l.mu_rho_tilde()] = mu_rho;
    x[l.rho_tilde_beta()] = rho_beta;
    x[l.rho_theta()] = sigmoid(rho_theta);
    for j in 0..2 {
        x[l.rho_beta(j)] = sigmoid(normal(rng, rho_beta, (1.0 - r1) * v));
    }

    for i in 0..3 {
        x[l.eta(i)] = normal(rng, hyper.eta_mean[i], hyper.eta_var[i]);
        x[l.theta(i)] = normal(rng, 0.0, hyper.theta_var[i]);
        for m in 0..2 {
            for k in 0..l.k_kappa {
                x[l.kappa(i, m, k)] = normal(rng, 0.0, hyper.kappa_var[i][k]);
            }
        }
    }
    let mut p = layout.from_natural(&x);
    for r in p.emission.rho_beta.iter_mut().chain(std::iter::once(&mut p.emission.rho_theta)) {
        *r = r.clamp(1e-12, 1.0 - 1e-12);
    }
    p
}

/// Prior mean of `Λ`.
pub fn transition_prior_mean(hyper: &Hyperparameters) -> TransitionParams<f64> {
    TransitionParams::from_array(hyper.nu_mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::logit;
    use statrs::distribution::{Continuous, Normal};

    fn npdf(x: f64, m: f64, v: f64) -> f64 {
        Normal::new(m, v.sqrt()).unwrap().ln_pdf(x)
    }

    fn unit_hyper() -> Hyperparameters {
        let mut h = default_hyperparameters_with(PriorPreset::Weak, 2, 3);
        h.alpha = HierNormal { mean: 1.5, var: 1.0, corr: 0.5 };
        h.gamma_var = vec![1.0, 1.0];
        h.kappa_var = [vec![1.0; 3], vec![1.0; 3], vec![1.0; 3]];
        h.eta_var = [1.0; 3];
        h.theta_var = [1.0; 3];
        h
    }

    /// Every parameter at its (hyper)prior mean, evaluated term by term.
    #[test]
    fn log_prior_matches_term_by_term_oracle() {
        let h = unit_hyper();
        let mut p = ModelParams::<f64>::zeros(h.k_gamma, h.k_kappa);
        p.transition = TransitionParams::from_array(h.nu_mean);
        p.emission.alpha = [1.5, 1.5];
        p.latents.mu_alpha = 1.5;
        p.emission.eta = h.eta_mean;
        p.emission.xi = [0.5, 0.5];
        p.emission.rho_beta = [0.5, 0.5];
        p.emission.rho_theta = 0.5;
        let got = log_prior(&p, &h);

        let mut oracle = 0.0;
        for i in 0..7 {
            oracle += npdf(h.nu_mean[i], h.nu_mean[i], 1.0);
        }
        // Beta(2,2) density at 1/2 is 1.5
        oracle += 2.0 * 1.5f64.ln();
        oracle += 2.0 * npdf(1.5, 1.5, 0.5) + npdf(1.5, 1.5, 0.5);
        oracle += 2.0 * (2.0 * npdf(0.0, 0.0, 0.5) + npdf(0.0, 0.0, 0.5));
        oracle += 6.0 * (2.0 * npdf(0.0, 0.0, 0.5) + npdf(0.0, 0.0, 0.5));
        oracle += 4.0 * (2.0 * npdf(0.0, 0.0, 0.5) + npdf(0.0, 0.0, 0.5));
        // trivariate normal at its mean: -3/2 ln 2π - 1/2 ln det
        let det_v = {
            let m = h.beta_matrix();
            m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
                + m[2] * (m[3] * m[7] - m[4] * m[6])
        };
        let mvn_at_mean = |scale: f64| -1.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * (scale.powi(3) * det_v).ln();
        oracle += 2.0 * mvn_at_mean(0.5) + mvn_at_mean(0.5);
        let (v, r1, r2) = (h.rho_var, h.rho_r1, h.rho_r2);
        oracle += 2.0 * npdf(0.0, 0.0, (1.0 - r1) * v);
        oracle += 2.0 * npdf(0.0, 0.0, (1.0 - r2) * r1 * v);
        oracle += npdf(0.0, 0.0, r1 * r2 * v);
        // change of variables from logit(ρ) to ρ at ρ = 1/2
        oracle += 3.0 * 4.0f64.ln();
        for i in 0..3 {
            oracle += npdf(h.eta_mean[i], h.eta_mean[i], 1.0) + npdf(0.0, 0.0, 1.0);
            oracle += 6.0 * npdf(0.0, 0.0, 1.0);
        }
        assert!(got.is_finite());
        assert!((got - oracle).abs() < 1e-12 * oracle.abs(), "{got} vs {oracle}");
    }

    #[test]
    fn support_boundaries_give_negative_infinity() {
        let h = default_hyperparameters(PriorPreset::Weak);
        let mut p = sample_prior(&h, 3);
        p.emission.xi[0] = 0.0;
        assert_eq!(log_prior(&p, &h), f64::NEG_INFINITY);
        let mut p = sample_prior(&h, 3);
        p.emission.rho_theta = 1.0;
        assert_eq!(log_prior(&p, &h), f64::NEG_INFINITY);
    }

    #[test]
    fn presets_are_valid() {
        for preset in [PriorPreset::Weak, PriorPreset::PaperLike] {
            let h = default_hyperparameters(preset);
            h.validate().unwrap();
            if preset == PriorPreset::Weak {
                assert!(h.nu_var.iter().all(|&v| v == 1.0));
            }
        }
        let mut h = default_hyperparameters(PriorPreset::Weak);
        h.nu_var[2] = 1.5;
        assert!(h.validate().is_err());
        let mut h = default_hyperparameters(PriorPreset::Weak);
        h.gamma_var[3] = 5.0;
        assert!(h.validate().is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_in_support() {
        let h = default_hyperparameters(PriorPreset::PaperLike);
        let a = sample_prior(&h, 42);
        let b = sample_prior(&h, 42);
        assert_eq!(a, b);
        for seed in 0..200 {
            let p = sample_prior(&h, seed);
            assert!(p.emission.xi.iter().all(|&x| x > 0.0 && x < 1.0));
            assert!(log_prior(&p, &h).is_finite());
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let h = default_hyperparameters_with(PriorPreset::PaperLike, 3, 4);
        let layout = h.layout();
        for seed in 0..5 {
            let p = sample_prior(&h, seed);
            let x = layout.unconstrain(&p).unwrap();
            let mut g = vec![0.0; layout.dim()];
            let f0 = log_prior_unconstrained(&layout, &x, &h, Some(&mut g));
            assert_eq!(f0, log_prior_unconstrained(&layout, &x, &h, None));
            for i in 0..layout.dim() {
                let eps = 1e-5;
                let mut up = x.clone();
                let mut dn = x.clone();
                up[i] += eps;
                dn[i] -= eps;
                let fd = (log_prior_unconstrained(&layout, &up, &h, None)
                    - log_prior_unconstrained(&layout, &dn, &h, None))
                    / (2.0 * eps);
                assert!((fd - g[i]).abs() < 1e-5 * fd.abs().max(1.0), "coord {i}: {fd} vs {}", g[i]);
            }
        }
    }

    /// Self-normalised importance weights of prior draws under the prior are
    /// all equal when the density and the sampler agree; the ratio of the
    /// density to a product of independently computed conditionals is
    /// constant.
    #[test]
    fn density_and_sampler_agree_on_conditionals() {
        let h = default_hyperparameters_with(PriorPreset::Weak, 2, 2);
        let layout = h.layout();
        let mut diffs = Vec::new();
        for seed in 0..50 {
            let p = sample_prior(&h, seed);
            let x = layout.unconstrain(&p).unwrap();
            let lp = log_prior_unconstrained(&layout, &x, &h, None);
            // rebuild the sampling density in the same coordinates
            let mut q = 0.0;
            let l = &layout;
            for i in 0..7 {
                q += npdf(x[l.nu(i)], h.nu_mean[i], h.nu_var[i]);
            }
            for i in 0..2 {
                let xi = p.emission.xi[i];
                let b = statrs::distribution::Beta::new(h.xi_a[i], h.xi_b[i]).unwrap();
                q += b.ln_pdf(xi) + (xi * (1.0 - xi)).ln();
            }
            let a = h.alpha;
            q += npdf(x[l.mu_alpha()], a.mean, a.corr * a.var);
            for j in 0..2 {
                q += npdf(x[l.alpha(j)], x[l.mu_alpha()], (1.0 - a.corr) * a.var);
            }
            let rest = lp - q;
            // the remaining blocks do not involve α, ν or ξ
            let mut y = x.clone();
            y[l.alpha(0)] += 0.3;
            y[l.nu(2)] -= 0.2;
            let lp2 = log_prior_unconstrained(&layout, &y, &h, None);
            let mut q2 = q - npdf(x[l.alpha(0)], x[l.mu_alpha()], (1.0 - a.corr) * a.var)
                + npdf(y[l.alpha(0)], x[l.mu_alpha()], (1.0 - a.corr) * a.var);
            q2 = q2 - npdf(x[l.nu(2)], h.nu_mean[2], h.nu_var[2]) + npdf(y[l.nu(2)], h.nu_mean[2], h.nu_var[2]);
            diffs.push(((lp2 - q2) - rest).abs());
        }
        assert!(diffs.iter().all(|&d| d < 1e-10));
    }

    #[test]
    fn rho_hierarchy_moments() {
        let mut h = default_hyperparameters_with(PriorPreset::PaperLike, 1, 1);
        h.rho_var = 0.8;
        h.rho_r1 = 0.7;
        h.rho_r2 = 0.4;
        let n = 200_000;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut s = vec![[0.0; 3]; n];
        for row in s.iter_mut() {
            let p = sample_prior_with(&h, &mut rng);
            *row = [logit(p.emission.rho_beta[0]), logit(p.emission.rho_beta[1]), logit(p.emission.rho_theta)];
        }
        let mean = |c: usize| s.iter().map(|r| r[c]).sum::<f64>() / n as f64;
        let m: Vec<f64> = (0..3).map(mean).collect();
        let cov = |a: usize, b: usize| s.iter().map(|r| (r[a] - m[a]) * (r[b] - m[b])).sum::<f64>() / n as f64;
        let cor = |a: usize, b: usize| cov(a, b) / (cov(a, a) * cov(b, b)).sqrt();
        assert!((cov(0, 0) - h.rho_var).abs() < 0.02);
        assert!((cov(2, 2) - h.rho_r1 * h.rho_var).abs() < 0.02);
        assert!((cor(0, 1) - h.rho_r1).abs() < 0.01);
        assert!((cor(0, 2) - h.rho_r1.sqrt() * h.rho_r2).abs() < 0.01);
    }
}
