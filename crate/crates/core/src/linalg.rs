//! Small dense linear-algebra helpers shared by the steering modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

pub fn min_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(sym)).eigenvalues.min()
}

/// Checks symmetry (to `1e-12` relative) and positive definiteness.
pub fn check_spd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::dims(format!("{what} must be square")));
    }
    if asymmetry(m) > 1e-12 * (1.0 + m.amax()) {
        return Err(Error::domain(format!("{what} is not symmetric")));
    }
    if min_eigenvalue(m) <= 0.0 {
        return Err(Error::domain(format!("{what} is not positive definite")));
    }
    Ok(())
}

/// Applies `f` to the eigenvalues of a symmetric matrix.
pub fn sym_fn(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    symmetrize(&(&eig.eigenvectors * d * eig.eigenvectors.transpose()))
}

pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| symmetrize(&c.inverse()))
        .ok_or_else(|| Error::domain("matrix is not positive definite"))
}

/// Numerical rank with threshold `max(rows, cols) · ε · σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    let thresh = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * smax;
    sv.iter().filter(|s| **s > thresh).count()
}

/// Minimum-norm least-squares solution of `m x = rhs` together with the numerical rank of `m`.
pub fn lstsq(m: &DMatrix<f64>, rhs: &DVector<f64>) -> (DVector<f64>, usize) {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let thresh = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * smax.max(f64::MIN_POSITIVE);
    let rank = svd.singular_values.iter().filter(|s| **s > thresh).count();
    let x = svd
        .solve(rhs, thresh)
        .unwrap_or_else(|_| DVector::zeros(m.ncols()));
    (x, rank)
}

/// Solves `A X + X Aᵀ + Q = 0` by Kronecker vectorisation.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() || q.shape() != (n, n) {
        return Err(Error::dims("Lyapunov equation needs square conformable A and Q"));
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let op = eye.kronecker(a) + a.kronecker(&eye);
    let rhs = -DVector::from_column_slice(q.as_slice());
    let x = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::domain("Lyapunov operator is singular (A has eigenvalues summing to zero)"))?;
    Ok(symmetrize(&DMatrix::from_column_slice(n, n, x.as_slice())))
}

/// `(e^{A t}, ∫₀ᵗ e^{A s} Q e^{Aᵀ s} ds)` via the Van Loan block exponential.
pub fn transition_and_gramian(a: &DMatrix<f64>, q: &DMatrix<f64>, t: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut block = DMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&(-a * t));
    block.view_mut((0, n), (n, n)).copy_from(&(q * t));
    block.view_mut((n, n), (n, n)).copy_from(&(a.transpose() * t));
    let e = block.exp();
    let g12 = e.view((0, n), (n, n)).into_owned();
    let g22 = e.view((n, n), (n, n)).into_owned();
    let phi = g22.transpose();
    let gram = symmetrize(&(&phi * g12));
    (phi, gram)
}

/// Upper-triangular half-vectorisation of a symmetric matrix.
pub fn vech(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        for i in 0..=j {
            out.push(m[(i, j)]);
        }
    }
    DVector::from_vec(out)
}

pub fn unvech(v: &DVector<f64>, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in 0..=j {
            m[(i, j)] = v[k];
            m[(j, i)] = v[k];
            k += 1;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn lyapunov_matches_hand_solution() {
        // Oscillator with unit noise on the velocity: stationary covariance diag(1/2, 1/2).
        let a = DMatrix::from_row_slice(2, 2, &[0., 1., -1., -1.]);
        let q = DMatrix::from_row_slice(2, 2, &[0., 0., 0., 1.]);
        let x = solve_lyapunov(&a, &q).unwrap();
        assert_abs_diff_eq!(x, DMatrix::from_diagonal_element(2, 2, 0.5), epsilon = 1e-12);
    }

    #[test]
    fn gramian_of_integrator() {
        // A = 0: transition is I and the Gramian is Q t.
        let a = DMatrix::zeros(1, 1);
        let q = DMatrix::from_element(1, 1, 2.0);
        let (phi, g) = transition_and_gramian(&a, &q, 0.5);
        assert_abs_diff_eq!(phi[(0, 0)], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g[(0, 0)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn gramian_of_double_integrator() {
        // ẋ = v, v̇ = u: ∫ [s²  s; s 1] ds over [0,1] = [1/3 1/2; 1/2 1].
        let a = DMatrix::from_row_slice(2, 2, &[0., 1., 0., 0.]);
        let q = DMatrix::from_row_slice(2, 2, &[0., 0., 0., 1.]);
        let (phi, g) = transition_and_gramian(&a, &q, 1.0);
        assert_abs_diff_eq!(phi, DMatrix::from_row_slice(2, 2, &[1., 1., 0., 1.]), epsilon = 1e-13);
        assert_abs_diff_eq!(g, DMatrix::from_row_slice(2, 2, &[1. / 3., 0.5, 0.5, 1.]), epsilon = 1e-13);
    }

    #[test]
    fn vech_roundtrip() {
        let m = DMatrix::from_row_slice(3, 3, &[1., 2., 3., 2., 4., 5., 3., 5., 6.]);
        assert_eq!(unvech(&vech(&m), 3), m);
        assert_eq!(vech(&m).len(), 6);
    }

    #[test]
    fn rank_and_lstsq() {
        let m = DMatrix::from_row_slice(3, 2, &[1., 0., 0., 1., 1., 1.]);
        assert_eq!(numerical_rank(&m), 2);
        let (x, r) = lstsq(&m, &DVector::from_column_slice(&[1., 2., 3.]));
        assert_eq!(r, 2);
        assert_abs_diff_eq!(x, DVector::from_column_slice(&[1., 2.]), epsilon = 1e-12);
        assert_eq!(numerical_rank(&DMatrix::zeros(2, 2)), 0);
    }
}
