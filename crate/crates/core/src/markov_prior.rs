//! Prior transition kernels on finite state spaces.
//!
//! Kernels are dense row-stochastic matrices: row = source state, column =
//! target state. Grid heat kernels truncate the Gaussian transition density
//! to the grid and renormalise each row.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

const STOCHASTIC_TOL: f64 = 1e-12;

/// Uniform 1D grid, points `lower + i·h` for `i = 0..n_points`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid1D {
    lower: f64,
    upper: f64,
    n_points: usize,
}

impl Grid1D {
    pub fn new(lower: f64, upper: f64, n_points: usize) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::domain("grid needs at least 2 points"));
        }
        if !(lower.is_finite() && upper.is_finite() && upper > lower) {
            return Err(Error::domain(format!("invalid grid bounds [{lower}, {upper}]")));
        }
        Ok(Self { lower, upper, n_points })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / (self.n_points - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.upper
        } else {
            self.lower + i as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.point(i)).collect()
    }
}

/// Row-stochastic transition matrix with the time it spans.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionKernel {
    matrix: DMatrix<f64>,
    step_duration: f64,
}

impl TransitionKernel {
    /// Validates nonnegativity and row sums (within `1e-12`).
    pub fn new(matrix: DMatrix<f64>, step_duration: f64) -> Result<Self> {
        if !matrix.is_square() || matrix.is_empty() {
            return Err(Error::dims(format!(
                "transition kernel must be square and nonempty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if !(step_duration.is_finite() && step_duration >= 0.0) {
            return Err(Error::domain("step duration must be finite and nonnegative"));
        }
        if matrix.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::domain("kernel entries must be finite and nonnegative"));
        }
        for (i, row) in matrix.row_iter().enumerate() {
            let s = row.sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::domain(format!("row {i} sums to {s}, not 1")));
            }
        }
        Ok(Self { matrix, step_duration })
    }

    /// Normalises each row of a nonnegative matrix.
    pub fn from_weights(mut weights: DMatrix<f64>, step_duration: f64) -> Result<Self> {
        for (i, mut row) in weights.row_iter_mut().enumerate() {
            let s = row.sum();
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::domain(format!("row {i} has no positive mass")));
            }
            row /= s;
        }
        Self::new(weights, step_duration)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: DMatrix::identity(n, n),
            step_duration: 0.0,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn n_states(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn step_duration(&self) -> f64 {
        self.step_duration
    }

    /// Entrywise natural log, `-inf` on zero entries.
    pub fn log_matrix(&self) -> DMatrix<f64> {
        self.matrix.map(f64::ln)
    }

    /// Smallest strictly positive entry, if any.
    pub fn min_positive(&self) -> Option<f64> {
        self.matrix
            .iter()
            .copied()
            .filter(|v| *v > 0.0)
            .min_by(f64::total_cmp)
    }
}

/// Probability vector over states.
#[derive(Clone, Debug, PartialEq)]
pub struct Marginal(DVector<f64>);

impl Marginal {
    /// Validates nonnegativity and total mass (within `1e-12`).
    pub fn new(p: DVector<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::domain("empty marginal"));
        }
        if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::domain("marginal entries must be finite and nonnegative"));
        }
        let s = p.sum();
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::domain(format!("marginal sums to {s}, not 1")));
        }
        Ok(Self(p))
    }

    /// Normalises nonnegative weights to unit mass.
    pub fn from_weights(w: DVector<f64>) -> Result<Self> {
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::domain("weights must be finite and nonnegative"));
        }
        let s = w.sum();
        if !(s > 0.0) {
            return Err(Error::domain("weights have no mass"));
        }
        Self::new(w / s)
    }

    pub fn from_slice(p: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(p))
    }

    pub fn uniform(n: usize) -> Self {
        Self(DVector::from_element(n, 1.0 / n as f64))
    }

    pub fn delta(n: usize, i: usize) -> Self {
        let mut p = DVector::zeros(n);
        p[i] = 1.0;
        Self(p)
    }

    /// Midpoint-rule discretisation of a density on the grid: cell `i` centred
    /// at `x_i` gets weight `h·f(x_i)`, then the vector is renormalised.
    pub fn discretize(grid: &Grid1D, density: impl Fn(f64) -> f64) -> Result<Self> {
        let h = grid.spacing();
        Self::from_weights(DVector::from_iterator(
            grid.len(),
            grid.points().into_iter().map(|x| h * density(x)),
        ))
    }

    pub fn gaussian(grid: &Grid1D, mean: f64, std: f64) -> Result<Self> {
        if !(std > 0.0) {
            return Err(Error::domain("standard deviation must be positive"));
        }
        Self::discretize(grid, |x| {
            let z = (x - mean) / std;
            (-0.5 * z * z).exp()
        })
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i] > 0.0).collect()
    }

    pub fn mean(&self, points: &[f64]) -> f64 {
        self.0.iter().zip(points).map(|(p, x)| p * x).sum()
    }

    pub fn variance(&self, points: &[f64]) -> f64 {
        let m = self.mean(points);
        self.0.iter().zip(points).map(|(p, x)| p * (x - m).powi(2)).sum()
    }

    pub fn total_variation(&self, other: &Marginal) -> f64 {
        0.5 * (&self.0 - &other.0).abs().sum()
    }
}

/// Heat kernel with variance `epsilon·dt` per step, truncated to the grid.
pub fn build_heat_kernel(grid: &Grid1D, epsilon: f64, dt: f64) -> Result<TransitionKernel> {
    if !(epsilon > 0.0 && epsilon.is_finite()) || !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::domain("epsilon and dt must be positive and finite"));
    }
    let two_var = 2.0 * epsilon * dt;
    if !(two_var > 0.0) || !two_var.is_finite() {
        return Err(Error::domain(
            "epsilon·dt underflows; use the log-space solver on a coarser time step",
        ));
    }
    let x = grid.points();
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        // The diagonal is the row maximum (exponent 0), so rows cannot vanish
        // unless the exponent itself is NaN.
        for j in 0..n {
            let d = x[i] - x[j];
            k[(i, j)] = (-(d * d) / two_var).exp();
        }
    }
    TransitionKernel::from_weights(k, dt).map_err(|e| {
        Error::domain(format!(
            "heat kernel row underflow ({e}); use the log-space path"
        ))
    })
}

/// Product of kernels in order, `K_1 K_2 ⋯ K_n`.
pub fn compose(kernels: &[TransitionKernel]) -> Result<TransitionKernel> {
    let (first, rest) = kernels
        .split_first()
        .ok_or_else(|| Error::domain("cannot compose an empty list of kernels"))?;
    let mut m = first.matrix.clone();
    let mut duration = first.step_duration;
    for (idx, k) in rest.iter().enumerate() {
        if k.n_states() != m.ncols() {
            return Err(Error::dims(format!(
                "kernel {} has {} states, expected {}",
                idx + 1,
                k.n_states(),
                m.ncols()
            )));
        }
        m = &m * &k.matrix;
        duration += k.step_duration;
    }
    renormalize_rows(&mut m);
    TransitionKernel::new(m, duration)
}

/// Row-vector product `p K`.
pub fn propagate(p: &Marginal, kernel: &TransitionKernel) -> Result<Marginal> {
    if p.len() != kernel.n_states() {
        return Err(Error::dims(format!(
            "marginal has {} states, kernel has {}",
            p.len(),
            kernel.n_states()
        )));
    }
    let mut q = kernel.matrix.tr_mul(&p.0);
    let s = q.sum();
    q /= s;
    Marginal::new(q)
}

// Removes the O(n·ε) drift in row sums that accumulates through products.
fn renormalize_rows(m: &mut DMatrix<f64>) {
    for mut row in m.row_iter_mut() {
        let s = row.sum();
        if s > 0.0 {
            row /= s;
        }
    }
}
