//! Scalar abstraction shared by the model math.
//!
//! Densities, transition probabilities and the filter are written against
//! [`Real`] so they can be evaluated in `f32` or `f64`. Data (demand,
//! covariates) always stays in `f64` and is converted at the point of use.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating point type usable by the model: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` constant into this type.
    #[inline]
    fn c(x: f64) -> Self {
        Self::from_f64(x).unwrap_or_else(Self::nan)
    }

    /// Lossy conversion back to `f64` for reporting.
    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Numerically stable `ln(exp(a_1) + ... + exp(a_n))`.
///
/// Returns `-inf` when every term is `-inf` (or the slice is empty).
pub fn log_sum_exp<S: Real>(terms: &[S]) -> S {
    let max = terms
        .iter()
        .copied()
        .fold(S::neg_infinity(), |m, x| if x > m { x } else { m });
    if max == S::neg_infinity() {
        return max;
    }
    let sum: S = terms.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// `ln(exp(a) + exp(b))` without allocating.
#[inline]
pub fn log_add_exp<S: Real>(a: S, b: S) -> S {
    if a == S::neg_infinity() {
        return b;
    }
    if b == S::neg_infinity() {
        return a;
    }
    if a > b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// Logistic function. Logits are clamped to ±35 before exponentiation.
#[inline]
pub fn sigmoid<S: Real>(x: S) -> S {
    let bound = S::c(35.0);
    let x = x.max(-bound).min(bound);
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// `ln(sigmoid(x))`, stable for any finite `x`.
#[inline]
pub fn log_sigmoid<S: Real>(x: S) -> S {
    if x >= S::zero() {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[inline]
pub fn logit<S: Real>(p: S) -> S {
    (p / (S::one() - p)).ln()
}
