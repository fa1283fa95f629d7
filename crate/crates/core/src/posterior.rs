//! Log-posterior in unconstrained coordinates.

use crate::error::{Error, Result};
use crate::gradient::log_likelihood_grad;
use crate::inference::{log_likelihood_f64, FitData};
use crate::params::{ModelParams, ParamLayout};
use crate::prior::{log_prior_unconstrained, Hyperparameters};
use crate::scalar::sigmoid;

/// A differentiable log-density on `R^d`.
pub trait Target: Sync {
    fn dim(&self) -> usize;

    /// Log-density, `-∞` outside the support.
    fn log_density(&self, x: &[f64]) -> f64;

    /// Log-density with its gradient written into `grad`.
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

/// Observed-data likelihood times prior, over the unconstrained vector.
#[derive(Debug, Clone)]
pub struct Posterior<'a> {
    pub data: &'a FitData,
    pub hyper: &'a Hyperparameters,
    pub layout: ParamLayout,
}

impl<'a> Posterior<'a> {
    pub fn new(data: &'a FitData, hyper: &'a Hyperparameters) -> Result<Self> {
        hyper.validate()?;
        let need = hyper.k_gamma.max(hyper.k_kappa);
        let have = data.design.first().map_or(0, |d| d.annual_cos.len());
        if have < need {
            return Err(Error::Config(format!(
                "data carries {have} annual harmonics but the prior needs {need}"
            )));
        }
        Ok(Self { data, hyper, layout: hyper.layout() })
    }

    pub fn params(&self, x: &[f64]) -> ModelParams<f64> {
        self.layout.constrain(x)
    }

    /// Log-likelihood plus log-prior plus log-Jacobian. Errors from the
    /// likelihood (support violations after constraining) map to `-∞`.
    pub fn log_posterior(&self, x: &[f64]) -> f64 {
        if x.len() != self.layout.dim() || x.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let lp = log_prior_unconstrained(&self.layout, x, self.hyper, None);
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        match log_likelihood_f64(self.data, &self.params(x)) {
            Ok(ll) if ll.is_finite() => ll + lp,
            _ => f64::NEG_INFINITY,
        }
    }

    pub fn log_posterior_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        if x.len() != self.layout.dim() || x.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let params = self.params(x);
        let ll = match log_likelihood_grad(self.data, &params, &self.layout, grad) {
            Ok(ll) if ll.is_finite() => ll,
            _ => {
                grad.iter_mut().for_each(|g| *g = 0.0);
                return f64::NEG_INFINITY;
            }
        };
        for i in self.layout.logit_coordinates() {
            let s = sigmoid(x[i]);
            grad[i] *= s * (1.0 - s);
        }
        let lp = log_prior_unconstrained(&self.layout, x, self.hyper, Some(grad));
        ll + lp
    }
}

impl<T: Target + ?Sized> Target for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        (**self).log_density(x)
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (**self).log_density_grad(x, grad)
    }
}

impl Target for Posterior<'_> {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        self.log_posterior(x)
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.log_posterior_grad(x, grad)
    }
}

/// A target with some coordinates held at fixed values.
#[derive(Debug, Clone)]
pub struct Restricted<T> {
    pub inner: T,
    pub base: Vec<f64>,
    pub free: Vec<usize>,
}

impl<T: Target> Restricted<T> {
    pub fn new(inner: T, base: Vec<f64>, free: Vec<usize>) -> Result<Self> {
        if base.len() != inner.dim() {
            return Err(Error::InvalidInput("base point has the wrong dimension".into()));
        }
        if free.iter().any(|&i| i >= base.len()) {
            return Err(Error::InvalidInput("free index out of range".into()));
        }
        Ok(Self { inner, base, free })
    }

    /// Full vector with the free coordinates set from `z`.
    pub fn expand(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.base.clone();
        for (&i, &v) in self.free.iter().zip(z) {
            x[i] = v;
        }
        x
    }

    pub fn restrict(&self, x: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| x[i]).collect()
    }
}

impl<T: Target> Target for Restricted<T> {
    fn dim(&self) -> usize {
        self.free.len()
    }

    fn log_density(&self, z: &[f64]) -> f64 {
        self.inner.log_density(&self.expand(z))
    }

    fn log_density_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let x = self.expand(z);
        let mut full = vec![0.0; x.len()];
        let lp = self.inner.log_density_grad(&x, &mut full);
        for (g, &i) in grad.iter_mut().zip(&self.free) {
            *g = full[i];
        }
        lp
    }
}
