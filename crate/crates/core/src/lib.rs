//! Bayesian four-state non-homogeneous hidden Markov model for daily
//! bivariate gas demand around public holidays.
//!
//! Hidden states (zero-based): `0` pre-holiday, `1` holiday, `2`
//! post-holiday, `3` normal. Holidays are observed; the proximity states
//! are inferred. Log demand follows a bivariate VAR(1) around a
//! state-dependent mean with state-dependent precision.
//!
//! Model math is generic over [`scalar::Real`]; the aliases below fix the
//! scalar to `f64`, which is what the sampler and gradients use.

pub mod calendar;
pub mod config;
pub mod diagnostics;
pub mod emission;
pub mod error;
pub mod generative;
pub mod gradient;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod optim;
pub mod params;
pub mod posterior;
pub mod ppc;
pub mod prior;
pub mod sampler;
pub mod scalar;
pub mod state_model;
pub mod synthetic;

pub use error::{Error, Result};

pub type Params = params::ModelParams<f64>;
pub type Emission = emission::EmissionParams<f64>;
pub type Transition = state_model::TransitionParams<f64>;
pub type Latents = prior::HyperLatents<f64>;
pub type Smoothed = inference::SmoothedStates<f64>;
pub type Messages = inference::ForwardMessages<f64>;
pub type StateProbs = state_model::StateDistribution<f64>;
