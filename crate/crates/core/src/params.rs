//! Full parameter bundle and its flat unconstrained coordinates.
//!
//! The unconstrained vector uses `logit` for `ξ`, `ρ_β`, `ρ_θ` and the
//! identity elsewhere. The order is fixed by [`ParamLayout`]; the same order
//! (on the natural scale) is used for draw files.

use serde::{Deserialize, Serialize};

use crate::emission::{EmissionParams, Fourier, WEEKLY_HARMONICS};
use crate::error::{Error, Result};
use crate::prior::HyperLatents;
use crate::scalar::{log_sigmoid, logit, sigmoid, Real};
use crate::state_model::TransitionParams;

pub const NU_NAMES: [&str; 7] = ["411", "412", "341", "342", "343", "231", "232"];

/// `(Π, Λ)` together with the hierarchical latent means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<S> {
    pub emission: EmissionParams<S>,
    pub transition: TransitionParams<S>,
    pub latents: HyperLatents<S>,
}

impl<S: Real> ModelParams<S> {
    pub fn zeros(k_gamma: usize, k_kappa: usize) -> Self {
        Self {
            emission: EmissionParams::zeros(k_gamma, k_kappa),
            transition: TransitionParams::zeros(),
            latents: HyperLatents::zeros(k_gamma),
        }
    }

    pub fn cast<T: Real>(&self) -> ModelParams<T> {
        ModelParams {
            emission: self.emission.cast(),
            transition: self.transition.cast(),
            latents: self.latents.cast(),
        }
    }
}

/// Offsets of every parameter block in the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub k_gamma: usize,
    pub k_kappa: usize,
    xi: usize,
    alpha: usize,
    beta: usize,
    gamma: usize,
    delta: usize,
    zeta: usize,
    rho_beta: usize,
    rho_theta: usize,
    eta: usize,
    theta: usize,
    kappa: usize,
    mu_alpha: usize,
    mu_zeta: usize,
    mu_delta: usize,
    mu_gamma: usize,
    mu_beta: usize,
    rho_tilde_beta: usize,
    mu_rho_tilde: usize,
    dim: usize,
}

impl ParamLayout {
    pub fn new(k_gamma: usize, k_kappa: usize) -> Self {
        let mut at = 0;
        let mut take = |len: usize| {
            let start = at;
            at += len;
            start
        };
        let _nu = take(7);
        let xi = take(2);
        let alpha = take(2);
        let beta = take(6);
        let gamma = take(4 * k_gamma);
        let delta = take(4 * WEEKLY_HARMONICS);
        let zeta = take(4);
        let rho_beta = take(2);
        let rho_theta = take(1);
        let eta = take(3);
        let theta = take(3);
        let kappa = take(6 * k_kappa);
        let mu_alpha = take(1);
        let mu_zeta = take(2);
        let mu_delta = take(2 * WEEKLY_HARMONICS);
        let mu_gamma = take(2 * k_gamma);
        let mu_beta = take(3);
        let rho_tilde_beta = take(1);
        let mu_rho_tilde = take(1);
        let dim = take(0);
        Self {
            k_gamma,
            k_kappa,
            xi,
            alpha,
            beta,
            gamma,
            delta,
            zeta,
            rho_beta,
            rho_theta,
            eta,
            theta,
            kappa,
            mu_alpha,
            mu_zeta,
            mu_delta,
            mu_gamma,
            mu_beta,
            rho_tilde_beta,
            mu_rho_tilde,
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `ν` in the order of [`NU_NAMES`].
    pub fn nu(&self, i: usize) -> usize {
        i
    }
    pub fn xi(&self, i: usize) -> usize {
        self.xi + i
    }
    pub fn alpha(&self, j: usize) -> usize {
        self.alpha + j
    }
    /// Region `j`, holiday type index `r`.
    pub fn beta(&self, j: usize, r: usize) -> usize {
        self.beta + 3 * j + r
    }
    /// Region `j`, `m = 0` cosine / `1` sine, harmonic index `k` (0-based).
    pub fn gamma(&self, j: usize, m: usize, k: usize) -> usize {
        self.gamma + j * 2 * self.k_gamma + m * self.k_gamma + k
    }
    pub fn delta(&self, j: usize, m: usize, k: usize) -> usize {
        self.delta + j * 2 * WEEKLY_HARMONICS + m * WEEKLY_HARMONICS + k
    }
    /// Region `j`, `i = 0` linear / `1` interaction.
    pub fn zeta(&self, j: usize, i: usize) -> usize {
        self.zeta + 2 * j + i
    }
    pub fn rho_beta(&self, j: usize) -> usize {
        self.rho_beta + j
    }
    pub fn rho_theta(&self) -> usize {
        self.rho_theta
    }
    pub fn eta(&self, i: usize) -> usize {
        self.eta + i
    }
    pub fn theta(&self, i: usize) -> usize {
        self.theta + i
    }
    pub fn kappa(&self, i: usize, m: usize, k: usize) -> usize {
        self.kappa + i * 2 * self.k_kappa + m * self.k_kappa + k
    }
    pub fn mu_alpha(&self) -> usize {
        self.mu_alpha
    }
    pub fn mu_zeta(&self, i: usize) -> usize {
        self.mu_zeta + i
    }
    pub fn mu_delta(&self, m: usize, k: usize) -> usize {
        self.mu_delta + m * WEEKLY_HARMONICS + k
    }
    pub fn mu_gamma(&self, m: usize, k: usize) -> usize {
        self.mu_gamma + m * self.k_gamma + k
    }
    pub fn mu_beta(&self, r: usize) -> usize {
        self.mu_beta + r
    }
    pub fn rho_tilde_beta(&self) -> usize {
        self.rho_tilde_beta
    }
    pub fn mu_rho_tilde(&self) -> usize {
        self.mu_rho_tilde
    }

    /// Coordinates that are logits of unit-interval parameters.
    pub fn logit_coordinates(&self) -> [usize; 5] {
        [
            self.xi(0),
            self.xi(1),
            self.rho_beta(0),
            self.rho_beta(1),
            self.rho_theta(),
        ]
    }

    /// Natural-scale names, one per coordinate.
    pub fn names(&self) -> Vec<String> {
        let mut names = vec![String::new(); self.dim];
        let cs = ["cos", "sin"];
        for (i, n) in NU_NAMES.iter().enumerate() {
            names[self.nu(i)] = format!("nu_{n}");
        }
        for i in 0..2 {
            names[self.xi(i)] = format!("xi_{}", i + 1);
        }
        for j in 0..2 {
            names[self.alpha(j)] = format!("alpha_{}", j + 1);
            for r in 0..3 {
                names[self.beta(j, r)] = format!("beta_{}_{}", j + 1, r + 1);
            }
            for (m, c) in cs.iter().enumerate() {
                for k in 0..self.k_gamma {
                    names[self.gamma(j, m, k)] = format!("gamma_{}_{c}_{}", j + 1, k + 1);
                }
                for k in 0..WEEKLY_HARMONICS {
                    names[self.delta(j, m, k)] = format!("delta_{}_{c}_{}", j + 1, k + 1);
                }
            }
            for i in 0..2 {
                names[self.zeta(j, i)] = format!("zeta_{}_{}", j + 1, i + 1);
            }
            names[self.rho_beta(j)] = format!("rho_beta_{}", j + 1);
        }
        names[self.rho_theta()] = "rho_theta".into();
        for i in 0..3 {
            names[self.eta(i)] = format!("eta_{}", i + 1);
            names[self.theta(i)] = format!("theta_{}", i + 1);
            for (m, c) in cs.iter().enumerate() {
                for k in 0..self.k_kappa {
                    names[self.kappa(i, m, k)] = format!("kappa_{}_{c}_{}", i + 1, k + 1);
                }
            }
        }
        names[self.mu_alpha()] = "mu_alpha".into();
        for i in 0..2 {
            names[self.mu_zeta(i)] = format!("mu_zeta_{}", i + 1);
        }
        for (m, c) in cs.iter().enumerate() {
            for k in 0..WEEKLY_HARMONICS {
                names[self.mu_delta(m, k)] = format!("mu_delta_{c}_{}", k + 1);
            }
            for k in 0..self.k_gamma {
                names[self.mu_gamma(m, k)] = format!("mu_gamma_{c}_{}", k + 1);
            }
        }
        for r in 0..3 {
            names[self.mu_beta(r)] = format!("mu_beta_{}", r + 1);
        }
        names[self.rho_tilde_beta()] = "rho_tilde_beta".into();
        names[self.mu_rho_tilde()] = "mu_rho_tilde".into();
        names
    }

    /// Natural-scale vector in layout order.
    pub fn to_natural<S: Real>(&self, p: &ModelParams<S>) -> Result<Vec<S>> {
        let e = &p.emission;
        if e.k_gamma() != self.k_gamma || e.k_kappa() != self.k_kappa || p.latents.mu_gamma.harmonics() != self.k_gamma {
            return Err(Error::InvalidInput(format!(
                "parameters have K_γ={}, K_κ={} but the layout expects {}, {}",
                e.k_gamma(),
                e.k_kappa(),
                self.k_gamma,
                self.k_kappa
            )));
        }
        let mut x = vec![S::zero(); self.dim];
        for (i, v) in p.transition.to_array().into_iter().enumerate() {
            x[self.nu(i)] = v;
        }
        for i in 0..2 {
            x[self.xi(i)] = e.xi[i];
        }
        for j in 0..2 {
            x[self.alpha(j)] = e.alpha[j];
            for r in 0..3 {
                x[self.beta(j, r)] = e.beta[j][r];
            }
            for k in 0..self.k_gamma {
                x[self.gamma(j, 0, k)] = e.gamma[j].cos[k];
                x[self.gamma(j, 1, k)] = e.gamma[j].sin[k];
            }
            for k in 0..WEEKLY_HARMONICS {
                x[self.delta(j, 0, k)] = e.delta[j].cos[k];
                x[self.delta(j, 1, k)] = e.delta[j].sin[k];
            }
            for i in 0..2 {
                x[self.zeta(j, i)] = e.zeta[j][i];
            }
            x[self.rho_beta(j)] = e.rho_beta[j];
        }
        x[self.rho_theta()] = e.rho_theta;
        for i in 0..3 {
            x[self.eta(i)] = e.eta[i];
            x[self.theta(i)] = e.theta[i];
            for k in 0..self.k_kappa {
                x[self.kappa(i, 0, k)] = e.kappa[i].cos[k];
                x[self.kappa(i, 1, k)] = e.kappa[i].sin[k];
            }
        }
        let l = &p.latents;
        x[self.mu_alpha()] = l.mu_alpha;
        for i in 0..2 {
            x[self.mu_zeta(i)] = l.mu_zeta[i];
        }
        for k in 0..WEEKLY_HARMONICS {
            x[self.mu_delta(0, k)] = l.mu_delta.cos[k];
            x[self.mu_delta(1, k)] = l.mu_delta.sin[k];
        }
        for k in 0..self.k_gamma {
            x[self.mu_gamma(0, k)] = l.mu_gamma.cos[k];
            x[self.mu_gamma(1, k)] = l.mu_gamma.sin[k];
        }
        for r in 0..3 {
            x[self.mu_beta(r)] = l.mu_beta[r];
        }
        x[self.rho_tilde_beta()] = l.rho_tilde_beta;
        x[self.mu_rho_tilde()] = l.mu_rho_tilde;
        Ok(x)
    }

    /// Inverse of [`ParamLayout::to_natural`].
    pub fn from_natural<S: Real>(&self, x: &[S]) -> ModelParams<S> {
        assert_eq!(x.len(), self.dim, "parameter vector has the wrong length");
        let fourier = |k: usize, at: &dyn Fn(usize, usize) -> usize| Fourier {
            cos: (0..k).map(|h| x[at(0, h)]).collect(),
            sin: (0..k).map(|h| x[at(1, h)]).collect(),
        };
        let mut nu = [S::zero(); 7];
        for (i, v) in nu.iter_mut().enumerate() {
            *v = x[self.nu(i)];
        }
        let region = |j: usize| {
            (
                fourier(self.k_gamma, &|m, k| self.gamma(j, m, k)),
                fourier(WEEKLY_HARMONICS, &|m, k| self.delta(j, m, k)),
            )
        };
        let (g0, d0) = region(0);
        let (g1, d1) = region(1);
        let emission = EmissionParams {
            xi: [x[self.xi(0)], x[self.xi(1)]],
            alpha: [x[self.alpha(0)], x[self.alpha(1)]],
            beta: [0, 1].map(|j| [0, 1, 2].map(|r| x[self.beta(j, r)])),
            gamma: [g0, g1],
            delta: [d0, d1],
            zeta: [0, 1].map(|j| [x[self.zeta(j, 0)], x[self.zeta(j, 1)]]),
            rho_beta: [x[self.rho_beta(0)], x[self.rho_beta(1)]],
            rho_theta: x[self.rho_theta()],
            eta: [0, 1, 2].map(|i| x[self.eta(i)]),
            theta: [0, 1, 2].map(|i| x[self.theta(i)]),
            kappa: [0, 1, 2].map(|i| fourier(self.k_kappa, &|m, k| self.kappa(i, m, k))),
        };
        let latents = HyperLatents {
            mu_alpha: x[self.mu_alpha()],
            mu_zeta: [x[self.mu_zeta(0)], x[self.mu_zeta(1)]],
            mu_delta: fourier(WEEKLY_HARMONICS, &|m, k| self.mu_delta(m, k)),
            mu_gamma: fourier(self.k_gamma, &|m, k| self.mu_gamma(m, k)),
            mu_beta: [0, 1, 2].map(|r| x[self.mu_beta(r)]),
            rho_tilde_beta: x[self.rho_tilde_beta()],
            mu_rho_tilde: x[self.mu_rho_tilde()],
        };
        ModelParams {
            emission,
            transition: TransitionParams::from_array(nu),
            latents,
        }
    }

    /// Natural → unconstrained; boundary values are rejected.
    pub fn unconstrain_vector<S: Real>(&self, natural: &[S]) -> Result<Vec<S>> {
        let mut x = natural.to_vec();
        for i in self.logit_coordinates() {
            let v = x[i];
            if !(v > S::zero() && v < S::one()) {
                return Err(Error::Support(format!("coordinate {i} = {v} must lie in (0,1)")));
            }
            x[i] = logit(v);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Support("non-finite parameter".into()));
        }
        Ok(x)
    }

    /// Unconstrained → natural.
    pub fn constrain_vector<S: Real>(&self, x: &[S]) -> Vec<S> {
        let mut out = x.to_vec();
        for i in self.logit_coordinates() {
            out[i] = sigmoid(x[i]);
        }
        out
    }

    pub fn unconstrain<S: Real>(&self, p: &ModelParams<S>) -> Result<Vec<S>> {
        self.unconstrain_vector(&self.to_natural(p)?)
    }

    pub fn constrain<S: Real>(&self, x: &[S]) -> ModelParams<S> {
        self.from_natural(&self.constrain_vector(x))
    }

    /// `ln |∂(natural)/∂(unconstrained)|` at unconstrained `x`.
    pub fn log_jacobian<S: Real>(&self, x: &[S]) -> S {
        self.logit_coordinates()
            .iter()
            .map(|&i| log_sigmoid(x[i]) + log_sigmoid(-x[i]))
            .fold(S::zero(), |a, b| a + b)
    }

    /// Adds `∂ log_jacobian / ∂x` to `grad`.
    pub fn add_log_jacobian_grad(&self, x: &[f64], grad: &mut [f64]) {
        for i in self.logit_coordinates() {
            grad[i] += 1.0 - 2.0 * sigmoid(x[i]);
        }
    }
}
