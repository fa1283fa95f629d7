//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored; lists are comma separated.
//! `preset`, `k_gamma` and `k_kappa` choose the defaults, every other key
//! overrides one setting. Unknown or repeated keys are errors.
//!
//! | key | meaning |
//! |---|---|
//! | `preset` | `weak` or `paper-like` |
//! | `k_gamma`, `k_kappa` | annual harmonics in the mean and precision |
//! | `nu_mean`, `nu_var` | 7 values, order 411 412 341 342 343 231 232 |
//! | `xi_a`, `xi_b` | beta shapes, 2 values |
//! | `alpha_mean`, `alpha_var`, `alpha_corr` | |
//! | `zeta1_mean` … `zeta2_corr` | same triple for each CWV term |
//! | `delta_var`, `delta_corr` | weekly terms |
//! | `gamma_var` (K_γ values), `gamma_corr` | annual terms |
//! | `beta_var`, `beta_type_corr`, `beta_corr` | holiday effects |
//! | `rho_mean`, `rho_var`, `rho_r1`, `rho_r2` | decay rates |
//! | `eta_mean`, `eta_var`, `theta_var` | 3 values each |
//! | `kappa_var_1` … `kappa_var_3` | K_κ values each |
//! | `algorithm` | `hmc` or `adaptive-metropolis` |
//! | `chains`, `iterations`, `burn_in`, `thin` | |
//! | `leapfrog_steps`, `target_accept`, `initial_step_size`, `dense_mass` | HMC |
//! | `optimize_init`, `optimizer_iterations`, `init_attempts` | starting points |
//! | `cwv_halfwidth` | CWV baseline smoothing half-width in days |
//! | `replicates` | posterior predictive replicates (0 = one per draw) |
//! | `rhat_threshold` | convergence threshold used by `--strict` |

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prior::{default_hyperparameters_with, Hyperparameters, PriorPreset};
use crate::sampler::{Algorithm, SamplerConfig};
use crate::emission::{DEFAULT_K_GAMMA, DEFAULT_K_KAPPA};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub preset: PriorPreset,
    pub hyper: Hyperparameters,
    pub sampler: SamplerConfig,
    pub cwv_halfwidth: usize,
    pub replicates: usize,
    pub rhat_threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::with_preset(PriorPreset::PaperLike, DEFAULT_K_GAMMA, DEFAULT_K_KAPPA)
    }
}

impl RunConfig {
    pub fn with_preset(preset: PriorPreset, k_gamma: usize, k_kappa: usize) -> Self {
        Self {
            preset,
            hyper: default_hyperparameters_with(preset, k_gamma, k_kappa),
            sampler: SamplerConfig::default(),
            cwv_halfwidth: 10,
            replicates: 0,
            rhat_threshold: 1.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.sampler.validate()?;
        if !(self.rhat_threshold > 1.0) {
            return Err(Error::Config("rhat_threshold must exceed 1".into()));
        }
        Ok(())
    }

    /// Canonical text form; parsing it gives back an equal configuration.
    pub fn to_text(&self) -> String {
        let h = &self.hyper;
        let s = &self.sampler;
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("preset", self.preset.as_str().into());
        kv("k_gamma", h.k_gamma.to_string());
        kv("k_kappa", h.k_kappa.to_string());
        kv("nu_mean", list(&h.nu_mean));
        kv("nu_var", list(&h.nu_var));
        kv("xi_a", list(&h.xi_a));
        kv("xi_b", list(&h.xi_b));
        kv("alpha_mean", h.alpha.mean.to_string());
        kv("alpha_var", h.alpha.var.to_string());
        kv("alpha_corr", h.alpha.corr.to_string());
        for (i, z) in h.zeta.iter().enumerate() {
            kv(&format!("zeta{}_mean", i + 1), z.mean.to_string());
            kv(&format!("zeta{}_var", i + 1), z.var.to_string());
            kv(&format!("zeta{}_corr", i + 1), z.corr.to_string());
        }
        kv("delta_var", h.delta_var.to_string());
        kv("delta_corr", h.delta_corr.to_string());
        kv("gamma_var", list(&h.gamma_var));
        kv("gamma_corr", h.gamma_corr.to_string());
        kv("beta_var", h.beta_var.to_string());
        kv("beta_type_corr", h.beta_type_corr.to_string());
        kv("beta_corr", h.beta_corr.to_string());
        kv("rho_mean", h.rho_mean.to_string());
        kv("rho_var", h.rho_var.to_string());
        kv("rho_r1", h.rho_r1.to_string());
        kv("rho_r2", h.rho_r2.to_string());
        kv("eta_mean", list(&h.eta_mean));
        kv("eta_var", list(&h.eta_var));
        kv("theta_var", list(&h.theta_var));
        for (i, v) in h.kappa_var.iter().enumerate() {
            kv(&format!("kappa_var_{}", i + 1), list(v));
        }
        kv("algorithm", s.algorithm.as_str().into());
        kv("chains", s.n_chains.to_string());
        kv("iterations", s.n_iterations.to_string());
        kv("burn_in", s.burn_in.to_string());
        kv("thin", s.thin.to_string());
        kv("leapfrog_steps", s.leapfrog_steps.to_string());
        kv("target_accept", s.target_accept.to_string());
        kv("initial_step_size", s.initial_step_size.to_string());
        kv("dense_mass", s.dense_mass.to_string());
        kv("optimize_init", s.optimize_init.to_string());
        kv("optimizer_iterations", s.optimizer_iterations.to_string());
        kv("init_attempts", s.init_attempts.to_string());
        kv("cwv_halfwidth", self.cwv_halfwidth.to_string());
        kv("replicates", self.replicates.to_string());
        kv("rhat_threshold", self.rhat_threshold.to_string());
        out
    }
}

struct Entry<'a> {
    line: usize,
    key: &'a str,
    value: &'a str,
}

fn scalar<T: FromStr>(e: &Entry, path: &Path) -> Result<T> {
    e.value.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line: e.line,
        message: format!("cannot parse `{}` for `{}`", e.value, e.key),
    })
}

fn list(e: &Entry, path: &Path, len: Option<usize>) -> Result<Vec<f64>> {
    let v: Vec<f64> = e
        .value
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: e.line,
            message: format!("cannot parse `{}` as a list of numbers for `{}`", e.value, e.key),
        })?;
    if let Some(n) = len {
        if v.len() != n {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: e.line,
                message: format!("`{}` needs {n} values, got {}", e.key, v.len()),
            });
        }
    }
    Ok(v)
}

fn array<const N: usize>(e: &Entry, path: &Path) -> Result<[f64; N]> {
    let v = list(e, path, Some(N))?;
    Ok(std::array::from_fn(|i| v[i]))
}

/// Parses configuration text; `path` is only used in error messages.
pub fn parse_config(text: &str, path: &Path) -> Result<RunConfig> {
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim();
        if !seen.insert(key) {
            return Err(Error::Parse { path: path.to_path_buf(), line: i + 1, message: format!("`{key}` given twice") });
        }
        entries.push(Entry { line: i + 1, key, value: value.trim() });
    }
    let find = |k: &str| entries.iter().find(|e| e.key == k);
    let preset = match find("preset") {
        Some(e) => PriorPreset::parse(e.value).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: e.line,
            message: format!("unknown preset `{}`", e.value),
        })?,
        None => PriorPreset::PaperLike,
    };
    let k_gamma = find("k_gamma").map(|e| scalar(e, path)).transpose()?.unwrap_or(DEFAULT_K_GAMMA);
    let k_kappa = find("k_kappa").map(|e| scalar(e, path)).transpose()?.unwrap_or(DEFAULT_K_KAPPA);
    let mut c = RunConfig::with_preset(preset, k_gamma, k_kappa);
    for e in &entries {
        let h = &mut c.hyper;
        let s = &mut c.sampler;
        match e.key {
            "preset" | "k_gamma" | "k_kappa" => {}
            "nu_mean" => h.nu_mean = array(e, path)?,
            "nu_var" => h.nu_var = array(e, path)?,
            "xi_a" => h.xi_a = array(e, path)?,
            "xi_b" => h.xi_b = array(e, path)?,
            "alpha_mean" => h.alpha.mean = scalar(e, path)?,
            "alpha_var" => h.alpha.var = scalar(e, path)?,
            "alpha_corr" => h.alpha.corr = scalar(e, path)?,
            "zeta1_mean" => h.zeta[0].mean = scalar(e, path)?,
            "zeta1_var" => h.zeta[0].var = scalar(e, path)?,
            "zeta1_corr" => h.zeta[0].corr = scalar(e, path)?,
            "zeta2_mean" => h.zeta[1].mean = scalar(e, path)?,
            "zeta2_var" => h.zeta[1].var = scalar(e, path)?,
            "zeta2_corr" => h.zeta[1].corr = scalar(e, path)?,
            "delta_var" => h.delta_var = scalar(e, path)?,
            "delta_corr" => h.delta_corr = scalar(e, path)?,
            "gamma_var" => h.gamma_var = list(e, path, Some(k_gamma))?,
            "gamma_corr" => h.gamma_corr = scalar(e, path)?,
            "beta_var" => h.beta_var = scalar(e, path)?,
            "beta_type_corr" => h.beta_type_corr = scalar(e, path)?,
            "beta_corr" => h.beta_corr = scalar(e, path)?,
            "rho_mean" => h.rho_mean = scalar(e, path)?,
            "rho_var" => h.rho_var = scalar(e, path)?,
            "rho_r1" => h.rho_r1 = scalar(e, path)?,
            "rho_r2" => h.rho_r2 = scalar(e, path)?,
            "eta_mean" => h.eta_mean = array(e, path)?,
            "eta_var" => h.eta_var = array(e, path)?,
            "theta_var" => h.theta_var = array(e, path)?,
            "kappa_var_1" => h.kappa_var[0] = list(e, path, Some(k_kappa))?,
            "kappa_var_2" => h.kappa_var[1] = list(e, path, Some(k_kappa))?,
            "kappa_var_3" => h.kappa_var[2] = list(e, path, Some(k_kappa))?,
            "algorithm" => {
                s.algorithm = Algorithm::parse(e.value).ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line: e.line,
                    message: format!("unknown algorithm `{}`", e.value),
                })?
            }
            "chains" => s.n_chains = scalar(e, path)?,
            "iterations" => s.n_iterations = scalar(e, path)?,
            "burn_in" => s.burn_in = scalar(e, path)?,
            "thin" => s.thin = scalar(e, path)?,
            "leapfrog_steps" => s.leapfrog_steps = scalar(e, path)?,
            "target_accept" => s.target_accept = scalar(e, path)?,
            "initial_step_size" => s.initial_step_size = scalar(e, path)?,
            "dense_mass" => s.dense_mass = scalar(e, path)?,
            "optimize_init" => s.optimize_init = scalar(e, path)?,
            "optimizer_iterations" => s.optimizer_iterations = scalar(e, path)?,
            "init_attempts" => s.init_attempts = scalar(e, path)?,
            "cwv_halfwidth" => c.cwv_halfwidth = scalar(e, path)?,
            "replicates" => c.replicates = scalar(e, path)?,
            "rhat_threshold" => c.rhat_threshold = scalar(e, path)?,
            other => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: e.line,
                    message: format!("unknown key `{other}`"),
                })
            }
        }
    }
    c.validate()?;
    Ok(c)
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?, path)
}
