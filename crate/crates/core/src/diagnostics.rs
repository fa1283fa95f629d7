//! Convergence diagnostics: rank-normalised split R-hat and effective
//! sample size.
//!
//! Each chain is split in half (the middle draw is dropped for odd
//! lengths). Draws are pooled, replaced by their average ranks and mapped
//! through the normal quantile function `Φ⁻¹((r - 3/8) / (S + 1/4))`.
//! R-hat is the larger of the split R-hat of the normalised draws and of
//! the normalised absolute deviations from the pooled median. ESS is the
//! bulk ESS of the normalised draws, using Geyer's initial monotone
//! sequence on the multi-chain autocorrelation estimate.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Per-parameter diagnostics plus sampler counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub names: Vec<String>,
    /// `None` with a single chain.
    pub rhat: Vec<Option<f64>>,
    pub ess: Vec<f64>,
    /// Mean acceptance probability after burn-in, per chain.
    pub acceptance: Vec<f64>,
    /// Divergent trajectories (HMC) or non-finite proposals (Metropolis)
    /// after burn-in, per chain.
    pub divergences: Vec<usize>,
    /// Final HMC step size per chain; zero for Metropolis.
    pub step_size: Vec<f64>,
}

impl Diagnostics {
    pub fn max_rhat(&self) -> Option<f64> {
        self.rhat.iter().flatten().copied().fold(None, |m, v| Some(m.map_or(v, |m: f64| m.max(v))))
    }

    pub fn min_ess(&self) -> f64 {
        self.ess.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Splits every chain into two halves of equal length.
fn split(chains: &[&[f64]]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let h = c.len() / 2;
        out.push(c[..h].to_vec());
        out.push(c[c.len() - h..].to_vec());
    }
    out
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Classic R-hat over equal-length chains.
fn rhat_raw(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = mean(&chains.iter().map(|c| sample_var(c)).collect::<Vec<_>>());
    let b_over_n = sample_var(&means);
    if !(w > 0.0) {
        return if b_over_n > 0.0 { f64::INFINITY } else { 1.0 };
    }
    (((n - 1.0) / n * w + b_over_n) / w).sqrt()
}

/// Average ranks of the pooled draws mapped to normal scores, keeping the
/// chain structure.
pub fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut pooled: Vec<(f64, usize, usize)> = Vec::new();
    for (c, chain) in chains.iter().enumerate() {
        for (i, &v) in chain.iter().enumerate() {
            pooled.push((v, c, i));
        }
    }
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let s = pooled.len() as f64;
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        // ranks are 1-based; ties share their average rank
        let r = (i + j) as f64 / 2.0 + 1.0;
        let z = normal.inverse_cdf((r - 0.375) / (s + 0.25));
        for p in &pooled[i..=j] {
            out[p.1][p.2] = z;
        }
        i = j + 1;
    }
    out
}

/// Rank-normalised split R-hat; `None` for fewer than two chains or fewer
/// than four draws per chain.
pub fn split_rhat(chains: &[&[f64]]) -> Option<f64> {
    if chains.len() < 2 || chains.iter().any(|c| c.len() < 4) {
        return None;
    }
    let n = chains.iter().map(|c| c.len()).min().expect("non-empty");
    let trimmed: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let halves = split(&trimmed);
    let bulk = rhat_raw(&rank_normalize(&halves));
    let mut all: Vec<f64> = halves.iter().flatten().copied().collect();
    all.sort_by(f64::total_cmp);
    let med = if all.len() % 2 == 1 {
        all[all.len() / 2]
    } else {
        0.5 * (all[all.len() / 2 - 1] + all[all.len() / 2])
    };
    let folded: Vec<Vec<f64>> = halves.iter().map(|c| c.iter().map(|v| (v - med).abs()).collect()).collect();
    let tail = rhat_raw(&rank_normalize(&folded));
    Some(bulk.max(tail))
}

/// Biased autocovariance at lags `0..n`.
fn autocovariance(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let m = mean(x);
    let d: Vec<f64> = x.iter().map(|v| v - m).collect();
    (0..n)
        .map(|t| d[..n - t].iter().zip(&d[t..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
        .collect()
}

/// ESS of equal-length chains (no splitting or normalisation).
fn ess_raw(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains[0].len();
    let total = (m * n) as f64;
    if n < 4 {
        return total.max(1.0);
    }
    let acov: Vec<Vec<f64>> = chains.iter().map(|c| autocovariance(c)).collect();
    let nf = n as f64;
    let mean_var = acov.iter().map(|a| a[0]).sum::<f64>() / m as f64 * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += sample_var(&chains.iter().map(|c| mean(c)).collect::<Vec<_>>());
    }
    if !(var_plus > 0.0) {
        return 1.0;
    }
    let rho = |t: usize| 1.0 - (mean_var - acov.iter().map(|a| a[t]).sum::<f64>() / m as f64) / var_plus;
    let mut pairs = Vec::new();
    let mut t = 0;
    while t + 1 < n {
        let p = rho(t) + rho(t + 1);
        if p <= 0.0 {
            break;
        }
        pairs.push(p);
        t += 2;
    }
    for k in 1..pairs.len() {
        pairs[k] = pairs[k].min(pairs[k - 1]);
    }
    let tau = (-1.0 + 2.0 * pairs.iter().sum::<f64>()).max(1.0 / total.log10());
    (total / tau).clamp(1.0, total * total.log10())
}

/// Bulk ESS of the rank-normalised split chains.
pub fn effective_sample_size(chains: &[&[f64]]) -> f64 {
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if n < 4 {
        return (n * chains.len()).max(1) as f64;
    }
    let trimmed: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    ess_raw(&rank_normalize(&split(&trimmed)))
}

/// Diagnostics for draws indexed `chains[c][i][p]` (chain, draw, parameter).
pub fn diagnostics(names: &[String], chains: &[Vec<Vec<f64>>]) -> Diagnostics {
    let d = names.len();
    let mut rhat = Vec::with_capacity(d);
    let mut ess = Vec::with_capacity(d);
    for p in 0..d {
        let series: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|draw| draw[p]).collect()).collect();
        let refs: Vec<&[f64]> = series.iter().map(|s| s.as_slice()).collect();
        rhat.push(split_rhat(&refs));
        ess.push(effective_sample_size(&refs));
    }
    Diagnostics {
        names: names.to_vec(),
        rhat,
        ess,
        acceptance: Vec::new(),
        divergences: Vec::new(),
        step_size: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn iid(chains: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..chains).map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect()).collect()
    }

    #[test]
    fn iid_normal_draws() {
        for seed in 0..5 {
            let c = iid(4, 1000, seed);
            let refs: Vec<&[f64]> = c.iter().map(|v| v.as_slice()).collect();
            let r = split_rhat(&refs).unwrap();
            assert!((0.99..=1.01).contains(&r), "rhat {r}");
            let e = effective_sample_size(&refs);
            assert!(e >= 0.8 * 4000.0, "ess {e}");
        }
    }

    #[test]
    fn constant_chains() {
        let same = vec![vec![1.0; 100]; 4];
        let refs: Vec<&[f64]> = same.iter().map(|v| v.as_slice()).collect();
        assert_eq!(effective_sample_size(&refs), 1.0);
        let differ: Vec<Vec<f64>> = (0..4).map(|c| vec![c as f64; 100]).collect();
        let refs: Vec<&[f64]> = differ.iter().map(|v| v.as_slice()).collect();
        assert!(split_rhat(&refs).unwrap() > 10.0);
        assert!(effective_sample_size(&refs) < 10.0);
    }

    #[test]
    fn permuting_chains_leaves_diagnostics_unchanged() {
        let mut c = iid(4, 300, 9);
        // make the chains differ so the check is not trivial
        for (k, chain) in c.iter_mut().enumerate() {
            for v in chain.iter_mut() {
                *v += 0.1 * k as f64;
            }
        }
        let names = vec!["x".to_string()];
        let as_draws = |c: &[Vec<f64>]| -> Vec<Vec<Vec<f64>>> { c.iter().map(|ch| ch.iter().map(|&v| vec![v]).collect()).collect() };
        let a = diagnostics(&names, &as_draws(&c));
        c.swap(0, 3);
        c.swap(1, 2);
        let b = diagnostics(&names, &as_draws(&c));
        assert!((a.rhat[0].unwrap() - b.rhat[0].unwrap()).abs() < 1e-12);
        assert!((a.ess[0] - b.ess[0]).abs() < 1e-9);
    }

    #[test]
    fn single_chain_has_ess_but_no_rhat() {
        let c = iid(1, 500, 3);
        let d = diagnostics(&["x".to_string()], &[c[0].iter().map(|&v| vec![v]).collect()]);
        assert!(d.rhat[0].is_none());
        assert!(d.ess[0] > 250.0);
    }

    #[test]
    fn autocorrelated_chains_have_lower_ess() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let c: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let mut x = 0.0;
                (0..1000)
                    .map(|_| {
                        x = 0.9 * x + rng.sample::<f64, _>(StandardNormal);
                        x
                    })
                    .collect()
            })
            .collect();
        let refs: Vec<&[f64]> = c.iter().map(|v| v.as_slice()).collect();
        let e = effective_sample_size(&refs);
        // AR(1) with coefficient 0.9: ESS ≈ N (1 - 0.9) / (1 + 0.9)
        let expect = 4000.0 * 0.1 / 1.9;
        assert!((e / expect - 1.0).abs() < 0.35, "{e} vs {expect}");
    }
}
