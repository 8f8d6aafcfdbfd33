//! Maintaining a stationary covariance by constant state feedback.
//!
//! A gain `K` keeps `Σ` invariant for `dX = (A − BK) X dt + B1 dW` iff
//!
//! ```text
//! (A − BK) Σ + Σ (A − BK)ᵀ + B1 B1ᵀ = 0.
//! ```
//!
//! With `X = Σ Kᵀ` this is linear: `B Xᵀ + X Bᵀ = A Σ + Σ Aᵀ + B1 B1ᵀ`.
//! Feasibility is decided by least squares on that map; the minimum-power
//! gain minimises `tr(K Σ Kᵀ)` over the affine solution set through the KKT
//! system of the equality-constrained quadratic program.

use nalgebra::{Complex, DMatrix, DVector};

use crate::linalg::{check_spd, lstsq, solve_lyapunov};
use crate::{Error, Result};

/// Relative feasibility threshold on the least-squares residual.
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct StationaryProblem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
}

impl StationaryProblem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, b1: DMatrix<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() || b.nrows() != n || b1.nrows() != n || sigma.shape() != (n, n) {
            return Err(Error::dims("A, B, B1 and Σ must conform"));
        }
        check_spd(&sigma, "target covariance")?;
        Ok(Self { a, b, b1, sigma })
    }

    /// `A Σ + Σ Aᵀ + B1 B1ᵀ`, the part the feedback has to cancel.
    pub fn drift_term(&self) -> DMatrix<f64> {
        &self.a * &self.sigma + &self.sigma * self.a.transpose() + &self.b1 * self.b1.transpose()
    }

    /// Linear map `X ↦ B Xᵀ + X Bᵀ` as a matrix from `vec(X)` (column-major,
    /// `n×m`) to the upper triangle of the symmetric result.
    fn constraint_matrix(&self) -> DMatrix<f64> {
        let n = self.a.nrows();
        let m = self.b.ncols();
        let rows = n * (n + 1) / 2;
        let mut c = DMatrix::zeros(rows, n * m);
        for col in 0..n * m {
            let mut x = DMatrix::zeros(n, m);
            x[(col % n, col / n)] = 1.0;
            let img = &self.b * x.transpose() + &x * self.b.transpose();
            c.set_column(col, &upper(&img));
        }
        c
    }
}

fn upper(m: &DMatrix<f64>) -> DVector<f64> {
    crate::linalg::vech(m)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// `X = Σ Kᵀ` from the least-squares solve (the certificate when feasible).
    pub certificate: DMatrix<f64>,
    /// `‖A Σ + Σ Aᵀ + B1 B1ᵀ − B Xᵀ − X Bᵀ‖_F`.
    pub residual: f64,
    pub threshold: f64,
}

pub fn check_feasibility(prob: &StationaryProblem) -> FeasibilityReport {
    let n = prob.a.nrows();
    let m = prob.b.ncols();
    let target = prob.drift_term();
    let (x, _) = lstsq(&prob.constraint_matrix(), &upper(&target));
    let x = DMatrix::from_column_slice(n, m, x.as_slice());
    let residual = (&target - (&prob.b * x.transpose() + &x * prob.b.transpose())).norm();
    let threshold = FEASIBILITY_TOL * (1.0 + target.norm());
    FeasibilityReport {
        feasible: residual <= threshold,
        certificate: x,
        residual,
        threshold,
    }
}

#[derive(Clone, Debug)]
pub struct StationaryGain {
    pub k: DMatrix<f64>,
    /// `tr(K Σ Kᵀ) = E|u|²` in steady state.
    pub power: f64,
    /// Frobenius residual of the closed-loop Lyapunov equation.
    pub lyapunov_residual: f64,
    pub closed_loop_eigenvalues: Vec<Complex<f64>>,
    /// All eigenvalues of `A − BK` in the open left half-plane.
    pub stable: bool,
    pub kkt_rank: usize,
    pub kkt_size: usize,
    /// KKT matrix rank-deficient: the multipliers (never the gain) are not unique.
    pub degenerate: bool,
    pub report: FeasibilityReport,
}

/// Minimum-power gain maintaining `prob.sigma`.
pub fn optimal_stationary_gain(prob: &StationaryProblem) -> Result<StationaryGain> {
    let report = check_feasibility(prob);
    if !report.feasible {
        return Err(Error::Infeasible(format!(
            "target covariance cannot be maintained by state feedback (residual {:e} > {:e})",
            report.residual, report.threshold
        )));
    }
    let n = prob.a.nrows();
    let m = prob.b.ncols();
    let nk = n * m;

    // Constraint in terms of vec(K) (column-major m×n): X = Σ Kᵀ.
    let cx = prob.constraint_matrix();
    let mut ck = DMatrix::zeros(cx.nrows(), nk);
    for col in 0..nk {
        let mut k = DMatrix::zeros(m, n);
        k[(col % m, col / m)] = 1.0;
        let x = &prob.sigma * k.transpose();
        ck.set_column(col, &(&cx * DVector::from_column_slice(x.as_slice())));
    }
    // tr(K Σ Kᵀ) = vec(K)ᵀ (Σ ⊗ I_m) vec(K).
    let quad = prob.sigma.kronecker(&DMatrix::<f64>::identity(m, m));
    let nc = ck.nrows();
    let size = nk + nc;
    let mut kkt = DMatrix::zeros(size, size);
    kkt.view_mut((0, 0), (nk, nk)).copy_from(&(&quad * 2.0));
    kkt.view_mut((0, nk), (nk, nc)).copy_from(&ck.transpose());
    kkt.view_mut((nk, 0), (nc, nk)).copy_from(&ck);
    let mut rhs = DVector::zeros(size);
    rhs.rows_mut(nk, nc).copy_from(&upper(&prob.drift_term()));
    let (sol, rank) = lstsq(&kkt, &rhs);
    let k = DMatrix::from_column_slice(m, n, &sol.as_slice()[..nk]);

    let closed = &prob.a - &prob.b * &k;
    let lyapunov_residual = (&closed * &prob.sigma
        + &prob.sigma * closed.transpose()
        + &prob.b1 * prob.b1.transpose())
        .norm();
    let eig: Vec<Complex<f64>> = closed.complex_eigenvalues().iter().copied().collect();
    let stable = eig.iter().all(|z| z.re < 0.0);
    let power = (&k * &prob.sigma * k.transpose()).trace();
    Ok(StationaryGain {
        k,
        power,
        lyapunov_residual,
        closed_loop_eigenvalues: eig,
        stable,
        kkt_rank: rank,
        kkt_size: size,
        degenerate: rank < size,
        report,
    })
}

/// Stationary covariance of `dX = (A − BK) X dt + B1 dW`.
pub fn closed_loop_covariance(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    b1: &DMatrix<f64>,
    k: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let closed = a - b * k;
    if closed.complex_eigenvalues().iter().any(|z| z.re >= 0.0) {
        return Err(Error::domain("closed loop is not asymptotically stable"));
    }
    solve_lyapunov(&closed, &(b1 * b1.transpose()))
}
