//! Closed-form 2×2 (and one 3×3) linear algebra.

use crate::scalar::Real;

/// Row-major 2×2 matrix.
pub type Mat2<S> = [[S; 2]; 2];

#[inline]
pub fn mat2_det<S: Real>(m: &Mat2<S>) -> S {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

#[inline]
pub fn mat2_inv<S: Real>(m: &Mat2<S>) -> Mat2<S> {
    let d = mat2_det(m);
    [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]
}

#[inline]
pub fn mat2_mul<S: Real>(a: &Mat2<S>, b: &Mat2<S>) -> Mat2<S> {
    let mut out = [[S::zero(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

#[inline]
pub fn mat2_transpose<S: Real>(a: &Mat2<S>) -> Mat2<S> {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

#[inline]
pub fn mat2_vec<S: Real>(a: &Mat2<S>, v: [S; 2]) -> [S; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

#[inline]
pub fn quad_form<S: Real>(a: &Mat2<S>, v: [S; 2]) -> S {
    let av = mat2_vec(a, v);
    v[0] * av[0] + v[1] * av[1]
}

/// Eigenvalues of a symmetric 2×2 matrix, ascending.
pub fn sym_eigenvalues<S: Real>(m: &Mat2<S>) -> [S; 2] {
    let half = S::c(0.5);
    let mean = half * (m[0][0] + m[1][1]);
    let diff = half * (m[0][0] - m[1][1]);
    let r = (diff * diff + m[0][1] * m[1][0]).sqrt();
    [mean - r, mean + r]
}

pub fn max_abs_diff<S: Real>(a: &Mat2<S>, b: &Mat2<S>) -> S {
    let mut m = S::zero();
    for i in 0..2 {
        for j in 0..2 {
            m = m.max((a[i][j] - b[i][j]).abs());
        }
    }
    m
}

/// Solves the 3×3 system `a x = b` by Gaussian elimination with partial
/// pivoting. Returns `None` when a pivot vanishes.
pub fn solve3<S: Real>(mut a: [[S; 3]; 3], mut b: [S; 3]) -> Option<[S; 3]> {
    for col in 0..3 {
        let mut piv = col;
        for row in col + 1..3 {
            if a[row][col].abs() > a[piv][col].abs() {
                piv = row;
            }
        }
        if a[piv][col] == S::zero() || !a[piv][col].is_finite() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] = a[row][k] - f * a[col][k];
            }
            b[row] = b[row] - f * b[col];
        }
    }
    let mut x = [S::zero(); 3];
    for row in (0..3).rev() {
        let mut acc = b[row];
        for k in row + 1..3 {
            acc = acc - a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Lower Cholesky factor of a row-major `n×n` symmetric positive definite
/// matrix, or `None` if a pivot is not positive.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// `L x` for a lower-triangular row-major `L`.
pub fn lower_mul(l: &[f64], n: usize, x: &[f64], out: &mut [f64]) {
    for i in 0..n {
        let row = &l[i * n..i * n + i + 1];
        out[i] = row.iter().zip(&x[..=i]).map(|(a, b)| a * b).sum();
    }
}

/// `L' x` for a lower-triangular row-major `L`.
pub fn lower_t_mul(l: &[f64], n: usize, x: &[f64], out: &mut [f64]) {
    out[..n].fill(0.0);
    for i in 0..n {
        let xi = x[i];
        for j in 0..=i {
            out[j] += l[i * n + j] * xi;
        }
    }
}

/// Solves `L y = b` in place.
pub fn lower_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for j in 0..i {
            s -= l[i * n + j] * b[j];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves `L' y = b` in place.
pub fn lower_t_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= l[j * n + i] * b[j];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Inverse of a symmetric positive definite matrix via its Cholesky factor.
pub fn spd_inverse(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let l = cholesky(a, n)?;
    let mut inv = vec![0.0; n * n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        col.fill(0.0);
        col[j] = 1.0;
        lower_solve(&l, n, &mut col);
        lower_t_solve(&l, n, &mut col);
        for i in 0..n {
            inv[i * n + j] = col[i];
        }
    }
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (inv[i * n + j] + inv[j * n + i]);
            inv[i * n + j] = m;
            inv[j * n + i] = m;
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_times_matrix_is_identity() {
        let m = [[2.0, 0.3], [0.3, 1.5]];
        let p = mat2_mul(&m, &mat2_inv(&m));
        assert!(max_abs_diff(&p, &[[1.0, 0.0], [0.0, 1.0]]) < 1e-15);
    }

    #[test]
    fn solve3_recovers_known_solution() {
        let a: [[f64; 3]; 3] = [[4.0, 1.0, 0.5], [1.0, 3.0, -1.0], [0.0, 2.0, 5.0]];
        let x = [1.0, -2.0, 0.25];
        let b = [
            a[0][0] * x[0] + a[0][1] * x[1] + a[0][2] * x[2],
            a[1][0] * x[0] + a[1][1] * x[1] + a[1][2] * x[2],
            a[2][0] * x[0] + a[2][1] * x[1] + a[2][2] * x[2],
        ];
        let got = solve3(a, b).unwrap();
        for i in 0..3 {
            assert!((got[i] - x[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn cholesky_round_trip_and_inverse() {
        let a = [4.0, 2.0, 0.6, 2.0, 3.0, 0.4, 0.6, 0.4, 2.0];
        let l = cholesky(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| l[i * 3 + k] * l[j * 3 + k]).sum();
                assert!((s - a[i * 3 + j]).abs() < 1e-14);
            }
        }
        let inv = spd_inverse(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| a[i * 3 + k] * inv[k * 3 + j]).sum();
                assert!((s - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        let x = [0.3, -1.0, 2.0];
        let mut y = [0.0; 3];
        lower_mul(&l, 3, &x, &mut y);
        lower_solve(&l, 3, &mut y);
        let mut z = [0.0; 3];
        lower_t_mul(&l, 3, &y, &mut z);
        lower_t_solve(&l, 3, &mut z);
        for i in 0..3 {
            assert!((z[i] - x[i]).abs() < 1e-14);
        }
        assert!(cholesky(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
    }
}
