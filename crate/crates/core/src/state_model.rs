//! The cyclic, non-homogeneous Markov chain over day types and its
//! pair-augmented form.
//!
//! States are 1 (pre-holiday), 2 (holiday), 3 (post-holiday) and 4 (normal).
//! State 2 is observed: it occurs exactly on calendar holidays. On other days
//! the chain may only move 4→1, 1→1, 2→3, 2→4, 3→3, 3→4 and 4→4, with the
//! three free probabilities driven by the distance to the surrounding
//! holidays through logit-linear models.

use serde::{Deserialize, Serialize};

use crate::calendar::HolidayDistance;
use crate::error::{Error, Result};
use crate::scalar::{log_sigmoid, sigmoid, Real};

pub const N_STATES: usize = 4;
pub const N_PAIRS: usize = 11;

/// Zero-based state indices.
pub const PRE: usize = 0;
pub const HOLIDAY: usize = 1;
pub const POST: usize = 2;
pub const NORMAL: usize = 3;

/// Which chain is in use. The two-state chain drops the proximity states
/// structurally: non-holidays are always state 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelMode {
    #[default]
    FourState,
    TwoState,
}

impl ModelMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelMode::FourState => "four_state",
            ModelMode::TwoState => "two_state",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "four_state" | "four-state" | "4" => Some(ModelMode::FourState),
            "two_state" | "two-state" | "2" => Some(ModelMode::TwoState),
            _ => None,
        }
    }

    /// States that can occur on a non-holiday.
    pub fn hidden_states(self) -> &'static [usize] {
        match self {
            ModelMode::FourState => &[PRE, POST, NORMAL],
            ModelMode::TwoState => &[NORMAL],
        }
    }
}

impl std::fmt::Display for ModelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Logit coefficients of the three free transition probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionParams<S> {
    /// `(ν411, ν412)`: entry into the pre-holiday state.
    pub nu_41: [S; 2],
    /// `(ν341, ν342, ν343)`: exit from the post-holiday state.
    pub nu_34: [S; 3],
    /// `(ν231, ν232)`: entry into the post-holiday state.
    pub nu_23: [S; 2],
}

impl<S: Real> TransitionParams<S> {
    pub fn zeros() -> Self {
        Self {
            nu_41: [S::zero(); 2],
            nu_34: [S::zero(); 3],
            nu_23: [S::zero(); 2],
        }
    }

    /// Coefficients in the order ν411, ν412, ν341, ν342, ν343, ν231, ν232.
    pub fn to_array(&self) -> [S; 7] {
        [
            self.nu_41[0],
            self.nu_41[1],
            self.nu_34[0],
            self.nu_34[1],
            self.nu_34[2],
            self.nu_23[0],
            self.nu_23[1],
        ]
    }

    pub fn from_array(a: [S; 7]) -> Self {
        Self {
            nu_41: [a[0], a[1]],
            nu_34: [a[2], a[3], a[4]],
            nu_23: [a[5], a[6]],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }

    pub fn cast<T: Real>(&self) -> TransitionParams<T> {
        TransitionParams::from_array(self.to_array().map(|x| T::c(x.f64())))
    }
}

/// Covariate multiplying ν412: `sqrt(n - 1) / 10`.
#[inline]
pub fn pre_entry_covariate(n: u32) -> f64 {
    (n.saturating_sub(1) as f64).sqrt() / 10.0
}

/// Covariate multiplying ν342: `sqrt(p - 2) / 10`, floored at zero.
#[inline]
pub fn post_exit_covariate(p: u32) -> f64 {
    (p.saturating_sub(2) as f64).sqrt() / 10.0
}

/// Logit of λ41 on a non-holiday with `n` days to the next holiday.
pub fn logit_lambda_41<S: Real>(params: &TransitionParams<S>, n: u32) -> Result<S> {
    if n == 0 {
        return Err(Error::InvalidInput(
            "λ41 is undefined on a holiday (n = 0)".into(),
        ));
    }
    Ok(params.nu_41[0] + params.nu_41[1] * S::c(pre_entry_covariate(n)))
}

/// Logit of λ34 with `p ≥ 2` days since the previous holiday.
pub fn logit_lambda_34<S: Real>(params: &TransitionParams<S>, n: u32, p: u32) -> Result<S> {
    if p < 2 {
        return Err(Error::InvalidInput(format!(
            "λ34 needs p ≥ 2 (state 3 cannot be left on the first day after a holiday), got p = {p}"
        )));
    }
    Ok(logit_lambda_34_unchecked(params, n, p))
}

#[inline]
fn logit_lambda_34_unchecked<S: Real>(params: &TransitionParams<S>, n: u32, p: u32) -> S {
    let tomorrow_holiday = if n == 1 { S::one() } else { S::zero() };
    params.nu_34[0] + params.nu_34[1] * S::c(post_exit_covariate(p)) + params.nu_34[2] * tomorrow_holiday
}

/// Logit of λ23 on a non-holiday; the indicator picks out the bridge day
/// between two holidays two days apart.
pub fn logit_lambda_23<S: Real>(params: &TransitionParams<S>, n: u32) -> Result<S> {
    if n == 0 {
        return Err(Error::InvalidInput(
            "λ23 is undefined on a holiday (n = 0)".into(),
        ));
    }
    Ok(logit_lambda_23_unchecked(params, n))
}

#[inline]
fn logit_lambda_23_unchecked<S: Real>(params: &TransitionParams<S>, n: u32) -> S {
    let bridge = if n == 2 { S::one() } else { S::zero() };
    params.nu_23[0] + params.nu_23[1] * bridge
}

/// The three free logits `(x41, x34, x23)` on a non-holiday. Row 3 is only
/// reachable with `p ≥ 2`; at `p = 1` it is filled with the floored formula.
#[inline]
pub(crate) fn free_logits<S: Real>(params: &TransitionParams<S>, n: u32, p: u32) -> [S; 3] {
    [
        params.nu_41[0] + params.nu_41[1] * S::c(pre_entry_covariate(n)),
        logit_lambda_34_unchecked(params, n, p),
        logit_lambda_23_unchecked(params, n),
    ]
}

/// Row-stochastic 4×4 matrix `λ_{j,k}(n, p)` for the four-state chain.
pub fn transition_matrix<S: Real>(params: &TransitionParams<S>, n: u32, p: u32) -> [[S; 4]; 4] {
    transition_matrix_for(params, n, p, ModelMode::FourState)
}

pub fn transition_matrix_for<S: Real>(
    params: &TransitionParams<S>,
    n: u32,
    p: u32,
    mode: ModelMode,
) -> [[S; 4]; 4] {
    let (z, o) = (S::zero(), S::one());
    if n == 0 && p == 0 {
        return [[z, o, z, z]; 4];
    }
    match mode {
        ModelMode::TwoState => [[z, z, z, o]; 4],
        ModelMode::FourState => {
            let [x41, x34, x23] = free_logits(params, n, p);
            let l41 = sigmoid(x41);
            let l34 = sigmoid(x34);
            let l23 = sigmoid(x23);
            [
                [o, z, z, z],
                [z, z, l23, o - l23],
                [z, z, o - l34, l34],
                [l41, z, z, o - l41],
            ]
        }
    }
}

/// Log-probabilities `ln λ_{j,k}(n, p)`, computed with stable log-sigmoids.
pub fn log_transition_matrix<S: Real>(
    params: &TransitionParams<S>,
    n: u32,
    p: u32,
    mode: ModelMode,
) -> [[S; 4]; 4] {
    let (z, ninf) = (S::zero(), S::neg_infinity());
    if n == 0 && p == 0 {
        return [[ninf, z, ninf, ninf]; 4];
    }
    match mode {
        ModelMode::TwoState => [[ninf, ninf, ninf, z]; 4],
        ModelMode::FourState => {
            let [x41, x34, x23] = free_logits(params, n, p);
            [
                [z, ninf, ninf, ninf],
                [ninf, ninf, log_sigmoid(x23), log_sigmoid(-x23)],
                [ninf, ninf, log_sigmoid(-x34), log_sigmoid(x34)],
                [log_sigmoid(x41), ninf, ninf, log_sigmoid(-x41)],
            ]
        }
    }
}

/// Probability vector over the four states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDistribution<S> {
    pub probs: [S; 4],
}

impl<S: Real> StateDistribution<S> {
    pub fn sum(&self) -> S {
        self.probs.iter().copied().sum()
    }
}

/// Distribution of the day-0 state: certain holiday on a holiday, otherwise
/// uniform over the states allowed by `mode`.
pub fn initial_distribution<S: Real>(n0: u32, p0: u32) -> StateDistribution<S> {
    initial_distribution_for(n0, p0, ModelMode::FourState)
}

pub fn initial_distribution_for<S: Real>(n0: u32, p0: u32, mode: ModelMode) -> StateDistribution<S> {
    let mut probs = [S::zero(); 4];
    if n0 == 0 && p0 == 0 {
        probs[HOLIDAY] = S::one();
    } else {
        let allowed = mode.hidden_states();
        let w = S::one() / S::c(allowed.len() as f64);
        for &s in allowed {
            probs[s] = w;
        }
    }
    StateDistribution { probs }
}

/// The eleven admissible `(S_{t-1}, S_t)` pairs, zero-based, in the pinned
/// order (1,1),(1,2),(2,2),(2,3),(2,4),(3,2),(3,3),(3,4),(4,1),(4,2),(4,4).
pub const PAIRS: [(usize, usize); N_PAIRS] = [
    (PRE, PRE),
    (PRE, HOLIDAY),
    (HOLIDAY, HOLIDAY),
    (HOLIDAY, POST),
    (HOLIDAY, NORMAL),
    (POST, HOLIDAY),
    (POST, POST),
    (POST, NORMAL),
    (NORMAL, PRE),
    (NORMAL, HOLIDAY),
    (NORMAL, NORMAL),
];

/// The augmented state space with a lookup from `(previous, current)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedStateSpace {
    pairs: Vec<(usize, usize)>,
    index: [[Option<usize>; 4]; 4],
}

impl Default for AugmentedStateSpace {
    fn default() -> Self {
        Self::with_order(PAIRS.to_vec()).expect("pinned order is valid")
    }
}

impl AugmentedStateSpace {
    /// A space with a custom ordering of the same eleven pairs.
    pub fn with_order(pairs: Vec<(usize, usize)>) -> Result<Self> {
        if pairs.len() != N_PAIRS {
            return Err(Error::InvalidInput(format!(
                "expected {N_PAIRS} pairs, got {}",
                pairs.len()
            )));
        }
        let mut index = [[None; 4]; 4];
        for (k, &(a, b)) in pairs.iter().enumerate() {
            if !PAIRS.contains(&(a, b)) || index[a][b].is_some() {
                return Err(Error::InvalidInput(format!(
                    "pair ({}, {}) is not admissible or repeated",
                    a + 1,
                    b + 1
                )));
            }
            index[a][b] = Some(k);
        }
        Ok(Self { pairs, index })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn index_of(&self, prev: usize, cur: usize) -> Option<usize> {
        self.index[prev][cur]
    }
}

/// Dense 11×11 transition matrix of the augmented chain into a day with
/// covariates `(n, p)`: entry `((a,b),(b',c))` is `λ_{b,c}(n, p)` when
/// `b = b'` and zero otherwise.
pub fn augmented_transition_matrix<S: Real>(
    params: &TransitionParams<S>,
    n: u32,
    p: u32,
) -> [[S; N_PAIRS]; N_PAIRS] {
    let lam = transition_matrix(params, n, p);
    let mut out = [[S::zero(); N_PAIRS]; N_PAIRS];
    for (i, &(_, b)) in PAIRS.iter().enumerate() {
        for (k, &(b2, c)) in PAIRS.iter().enumerate() {
            if b == b2 {
                out[i][k] = lam[b][c];
            }
        }
    }
    out
}

/// Convenience wrapper taking a [`HolidayDistance`].
pub fn transition_matrix_at<S: Real>(
    params: &TransitionParams<S>,
    dist: HolidayDistance,
    mode: ModelMode,
) -> [[S; 4]; 4] {
    transition_matrix_for(params, dist.n, dist.p, mode)
}
