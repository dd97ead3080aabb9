//! Small numerical helpers: finite-difference Jacobians, rank margins, pole placement.

use crate::{Matrix, Vector};

/// Forward-difference step used when a map has no analytic Jacobian.
pub const FD_STEP: f64 = 1e-6;

/// Forward-difference Jacobian of `f` at `x`.
pub fn jacobian_forward(f: impl Fn(&Vector) -> Vector, x: &Vector, h: f64) -> Matrix {
    let f0 = f(x);
    let mut jac = Matrix::zeros(f0.len(), x.len());
    let mut xp = x.clone();
    for j in 0..x.len() {
        xp[j] += h;
        let col = (f(&xp) - &f0) / h;
        jac.set_column(j, &col);
        xp[j] = x[j];
    }
    jac
}

/// Central-difference Jacobian of `f` at `x`.
pub fn jacobian_central(f: impl Fn(&Vector) -> Vector, x: &Vector, h: f64) -> Matrix {
    let rows = f(x).len();
    let mut jac = Matrix::zeros(rows, x.len());
    let mut xp = x.clone();
    for j in 0..x.len() {
        xp[j] = x[j] + h;
        let fp = f(&xp);
        xp[j] = x[j] - h;
        let fm = f(&xp);
        xp[j] = x[j];
        jac.set_column(j, &((fp - fm) / (2.0 * h)));
    }
    jac
}

/// Central-difference gradient of a scalar function.
pub fn gradient_central(f: impl Fn(&Vector) -> f64, x: &Vector, h: f64) -> Vector {
    let mut g = Vector::zeros(x.len());
    let mut xp = x.clone();
    for j in 0..x.len() {
        xp[j] = x[j] + h;
        let fp = f(&xp);
        xp[j] = x[j] - h;
        let fm = f(&xp);
        xp[j] = x[j];
        g[j] = (fp - fm) / (2.0 * h);
    }
    g
}

pub fn singular_values(m: &Matrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Smallest of the `min(rows, cols)` singular values.
pub fn min_singular_value(m: &Matrix) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

/// Orthonormal basis (as columns) of the kernel of a full-row-rank `jac`.
pub fn kernel_basis(jac: &Matrix) -> Matrix {
    let n = jac.ncols();
    let gram = jac * jac.transpose();
    let Some(gram_inv) = gram.try_inverse() else {
        return Matrix::zeros(n, 0);
    };
    let proj = Matrix::identity(n, n) - jac.transpose() * gram_inv * jac;
    let eig = proj.symmetric_eigen();
    let cols: Vec<Vector> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > 0.5)
        .map(|(i, _)| eig.eigenvectors.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        return Matrix::zeros(n, 0);
    }
    Matrix::from_columns(&cols)
}

/// Largest real part among the eigenvalues of a square matrix.
pub fn max_real_eigenvalue(m: &Matrix) -> f64 {
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|c| c.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Monic polynomial coefficients `[c_1, .., c_m]` of `prod (s - p_i)`, i.e.
/// `s^m + c_1 s^{m-1} + .. + c_m`.
pub fn poly_from_roots(roots: &[f64]) -> Vec<f64> {
    let mut coeffs = vec![1.0];
    for &r in roots {
        let mut next = vec![0.0; coeffs.len() + 1];
        for (i, &c) in coeffs.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        coeffs = next;
    }
    coeffs[1..].to_vec()
}

/// Output-injection gain placing the eigenvalues of `A + L C` at `poles`, where
/// `A` is the shift matrix (ones on the superdiagonal) and `C = e_1^T`.
///
/// `A + L C` is the companion matrix with first column `L`, whose characteristic
/// polynomial is `s^m - L_1 s^{m-1} - .. - L_m`.
pub fn shift_observer_gain(poles: &[f64]) -> Vector {
    Vector::from_iterator(poles.len(), poly_from_roots(poles).into_iter().map(|c| -c))
}

/// Shift matrix of size `m`: ones on the superdiagonal.
pub fn shift_matrix(m: usize) -> Matrix {
    Matrix::from_fn(m, m, |i, j| if j == i + 1 { 1.0 } else { 0.0 })
}

/// 2-norm condition number of the eigenvector matrix of a diagonalizable real
/// matrix with real eigenvalues; infinite when eigenvalues are not real.
pub fn eigenvector_condition(m: &Matrix) -> f64 {
    let n = m.nrows();
    let eigs = m.clone().complex_eigenvalues();
    if eigs.iter().any(|c| c.im.abs() > 1e-12) {
        return f64::INFINITY;
    }
    let mut cols = Vec::with_capacity(n);
    for lambda in eigs.iter() {
        let shifted = m - Matrix::identity(n, n) * lambda.re;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.expect("requested V^T");
        // Right singular vector for the smallest singular value spans the eigenspace.
        let (idx, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty");
        cols.push(v_t.row(idx).transpose().into_owned());
    }
    let vmat = Matrix::from_columns(&cols);
    let sv = singular_values(&vmat);
    sv[0] / sv[sv.len() - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn shift_gain_places_poles() {
        let l = shift_observer_gain(&[-2.0, -3.0, -4.0]);
        // (s+2)(s+3)(s+4) = s^3 + 9 s^2 + 26 s + 24
        assert_eq!(l.as_slice(), &[-9.0, -26.0, -24.0]);
        let a = shift_matrix(3);
        let mut c = Matrix::zeros(1, 3);
        c[(0, 0)] = 1.0;
        let closed = a + &l * &c;
        let mut eigs: Vec<f64> = closed.complex_eigenvalues().iter().map(|z| z.re).collect();
        eigs.sort_by(f64::total_cmp);
        assert_relative_eq!(eigs[0], -4.0, epsilon = 1e-8);
        assert_relative_eq!(eigs[1], -3.0, epsilon = 1e-8);
        assert_relative_eq!(eigs[2], -2.0, epsilon = 1e-8);
    }

    #[test]
    fn kernel_of_mode_constraint() {
        // d(p^2 - 1) at p = 1 is (0, 0, 2); kernel is the x-plane.
        let jac = Matrix::from_row_slice(1, 3, &[0.0, 0.0, 2.0]);
        let ker = kernel_basis(&jac);
        assert_eq!(ker.ncols(), 2);
        assert!((jac * ker).norm() < 1e-12);
    }

    #[test]
    fn forward_jacobian_matches_polynomial() {
        let f = |x: &Vector| Vector::from_vec(vec![x[0] * x[0], x[0] * x[1]]);
        let x = Vector::from_vec(vec![2.0, -3.0]);
        let j = jacobian_forward(f, &x, 1e-6);
        assert_relative_eq!(j[(0, 0)], 4.0, epsilon = 1e-5);
        assert_relative_eq!(j[(1, 0)], -3.0, epsilon = 1e-5);
        assert_relative_eq!(j[(1, 1)], 2.0, epsilon = 1e-5);
    }
}
