//! Limited-memory BFGS maximisation and a finite-difference Hessian, used to
//! move chain starting points towards the bulk and to seed the mass matrix.

use crate::linalg::{cholesky, lower_solve, lower_t_solve, spd_inverse};
use crate::posterior::Target;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximises `target` from `x0`. Stops when the largest gradient entry
/// falls below `gtol`, when the relative improvement stalls, or after
/// `max_iter` iterations.
pub fn maximize<T: Target + ?Sized>(target: &T, x0: &[f64], max_iter: usize, gtol: f64) -> OptimResult {
    let d = x0.len();
    let mem = 10;
    let mut x = x0.to_vec();
    let mut g = vec![0.0; d];
    // minimise f = -log density
    let mut f = -target.log_density_grad(&x, &mut g);
    g.iter_mut().for_each(|v| *v = -*v);
    if !f.is_finite() {
        return OptimResult { x, value: -f, iterations: 0, converged: false };
    }
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut stall = 0;
    let mut xn = vec![0.0; d];
    let mut gn = vec![0.0; d];
    for it in 0..max_iter {
        if g.iter().all(|v| v.abs() < gtol) {
            return OptimResult { x, value: -f, iterations: it, converged: true };
        }
        // two-loop recursion
        let mut q = g.clone();
        let k = s_hist.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            alpha[i] = rho * dot(&s_hist[i], &q);
            for j in 0..d {
                q[j] -= alpha[i] * y_hist[i][j];
            }
        }
        let gamma = if k > 0 {
            dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1])
        } else {
            1.0 / g.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0)
        };
        q.iter_mut().for_each(|v| *v *= gamma);
        for i in 0..k {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            let b = rho * dot(&y_hist[i], &q);
            for j in 0..d {
                q[j] += s_hist[i][j] * (alpha[i] - b);
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&dir, &g);
        if !(slope < 0.0) {
            // not a descent direction: restart from steepest descent
            s_hist.clear();
            y_hist.clear();
            let scale = 1.0 / g.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
            dir = g.iter().map(|v| -v * scale).collect();
            slope = dot(&dir, &g);
        }
        // backtracking Armijo search
        let mut step = 1.0;
        let mut fnew = f64::INFINITY;
        let mut found = false;
        for _ in 0..60 {
            for j in 0..d {
                xn[j] = x[j] + step * dir[j];
            }
            fnew = -target.log_density_grad(&xn, &mut gn);
            if fnew.is_finite() && fnew <= f + 1e-4 * step * slope {
                found = true;
                break;
            }
            step *= 0.5;
        }
        if !found {
            return OptimResult { x, value: -f, iterations: it, converged: false };
        }
        gn.iter_mut().for_each(|v| *v = -*v);
        let s: Vec<f64> = (0..d).map(|j| xn[j] - x[j]).collect();
        let y: Vec<f64> = (0..d).map(|j| gn[j] - g[j]).collect();
        if dot(&s, &y) > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > mem {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        let improvement = f - fnew;
        x.copy_from_slice(&xn);
        g.copy_from_slice(&gn);
        f = fnew;
        if improvement < 1e-12 * f.abs().max(1.0) {
            stall += 1;
            if stall >= 5 {
                return OptimResult { x, value: -f, iterations: it + 1, converged: true };
            }
        } else {
            stall = 0;
        }
    }
    OptimResult { x, value: -f, iterations: max_iter, converged: false }
}

/// Damped Newton ascent (Levenberg-Marquardt with Marquardt scaling) on
/// the finite-difference Hessian. Robust to poor conditioning at the cost
/// of `2 d` gradient evaluations per iteration. Stops when the Newton
/// decrement falls below `tol`.
pub fn newton_maximize<T: Target + ?Sized>(target: &T, x0: &[f64], max_iter: usize, tol: f64) -> OptimResult {
    let d = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; d];
    let mut f = target.log_density_grad(&x, &mut g);
    if !f.is_finite() {
        return OptimResult { x, value: f, iterations: 0, converged: false };
    }
    let mut lambda = 1e-3;
    let mut xn = vec![0.0; d];
    let mut gn = vec![0.0; d];
    for it in 0..max_iter {
        let Some(h) = negative_hessian(target, &x, 1e-5) else {
            return OptimResult { x, value: f, iterations: it, converged: false };
        };
        let scale: Vec<f64> = {
            let top = (0..d).map(|i| h[i * d + i].abs()).fold(0.0, f64::max).max(1e-12);
            (0..d).map(|i| h[i * d + i].abs().max(1e-8 * top)).collect()
        };
        let mut improved = false;
        for _ in 0..30 {
            let mut m = h.clone();
            for i in 0..d {
                m[i * d + i] += lambda * scale[i];
            }
            let Some(l) = cholesky(&m, d) else {
                lambda *= 4.0;
                continue;
            };
            let mut step = g.clone();
            lower_solve(&l, d, &mut step);
            lower_t_solve(&l, d, &mut step);
            let decrement = dot(&step, &g);
            if decrement < tol {
                return OptimResult { x, value: f, iterations: it, converged: true };
            }
            for j in 0..d {
                xn[j] = x[j] + step[j];
            }
            let fnew = target.log_density_grad(&xn, &mut gn);
            if fnew.is_finite() && fnew > f {
                x.copy_from_slice(&xn);
                g.copy_from_slice(&gn);
                f = fnew;
                lambda = (lambda / 3.0).max(1e-9);
                improved = true;
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            return OptimResult { x, value: f, iterations: it, converged: false };
        }
    }
    OptimResult { x, value: f, iterations: max_iter, converged: false }
}

/// Negative Hessian of the log density by central differences of the
/// gradient, symmetrised. Row-major.
pub fn negative_hessian<T: Target + ?Sized>(target: &T, x: &[f64], h: f64) -> Option<Vec<f64>> {
    let d = x.len();
    let mut out = vec![0.0; d * d];
    let mut gp = vec![0.0; d];
    let mut gm = vec![0.0; d];
    let mut xp = x.to_vec();
    for i in 0..d {
        let hi = h * x[i].abs().max(1.0);
        xp[i] = x[i] + hi;
        let fp = target.log_density_grad(&xp, &mut gp);
        xp[i] = x[i] - hi;
        let fm = target.log_density_grad(&xp, &mut gm);
        xp[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return None;
        }
        for j in 0..d {
            out[j * d + i] = -(gp[j] - gm[j]) / (2.0 * hi);
        }
    }
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (out[i * d + j] + out[j * d + i]);
            out[i * d + j] = v;
            out[j * d + i] = v;
        }
    }
    Some(out)
}

/// Covariance from a negative Hessian, adding diagonal loading until the
/// matrix is positive definite.
pub fn covariance_from_hessian(neg_hess: &[f64], d: usize) -> Option<Vec<f64>> {
    let scale = (0..d).map(|i| neg_hess[i * d + i].abs()).fold(0.0, f64::max).max(1e-8);
    let mut load = 0.0;
    for _ in 0..40 {
        let mut m = neg_hess.to_vec();
        for i in 0..d {
            m[i * d + i] += load;
        }
        if cholesky(&m, d).is_some() {
            return spd_inverse(&m, d);
        }
        load = if load == 0.0 { 1e-10 * scale } else { load * 10.0 };
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Correlated Gaussian with an offset mean.
    struct Gauss {
        prec: Vec<f64>,
        mean: Vec<f64>,
    }

    impl Target for Gauss {
        fn dim(&self) -> usize {
            self.mean.len()
        }
        fn log_density(&self, x: &[f64]) -> f64 {
            let mut g = vec![0.0; x.len()];
            self.log_density_grad(x, &mut g)
        }
        fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            let d = self.dim();
            let e: Vec<f64> = (0..d).map(|i| x[i] - self.mean[i]).collect();
            let mut lp = 0.0;
            for i in 0..d {
                let pe: f64 = (0..d).map(|j| self.prec[i * d + j] * e[j]).sum();
                grad[i] = -pe;
                lp -= 0.5 * e[i] * pe;
            }
            lp
        }
    }

    #[test]
    fn finds_gaussian_mode_and_covariance() {
        let prec = vec![4.0, 1.5, 0.0, 1.5, 2.0, 0.3, 0.0, 0.3, 0.5];
        let g = Gauss { prec: prec.clone(), mean: vec![1.0, -2.0, 30.0] };
        let r = maximize(&g, &[0.0, 0.0, 0.0], 500, 1e-9);
        assert!(r.converged);
        for (a, b) in r.x.iter().zip(&g.mean) {
            assert!((a - b).abs() < 1e-6);
        }
        let h = negative_hessian(&g, &r.x, 1e-4).unwrap();
        for (a, b) in h.iter().zip(&prec) {
            assert!((a - b).abs() < 1e-6);
        }
        let cov = covariance_from_hessian(&h, 3).unwrap();
        let direct = spd_inverse(&prec, 3).unwrap();
        for (a, b) in cov.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn newton_finds_gaussian_mode() {
        let g = Gauss { prec: vec![1e4, 90.0, 0.0, 90.0, 1.0, 0.0, 0.0, 0.0, 1e-4], mean: vec![0.1, -2.0, 300.0] };
        let r = newton_maximize(&g, &[0.0, 0.0, 0.0], 100, 1e-12);
        assert!(r.converged);
        for (a, b) in r.x.iter().zip(&g.mean) {
            assert!((a - b).abs() < 1e-5 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn indefinite_hessian_is_loaded() {
        let h = vec![1.0, 0.0, 0.0, -1e-3];
        let cov = covariance_from_hessian(&h, 2).unwrap();
        assert!(cov[0] > 0.0 && cov[3] > 0.0);
    }
}
