//! Closed-form optimal-transport oracles on the line and the zero-noise study.
//!
//! One-dimensional transport is monotone rearrangement, so everything here is
//! expressed through quantile functions: the optimal map is `F1⁻¹ ∘ F0`, the
//! displacement interpolant has quantiles `(1−t)F0⁻¹ + tF1⁻¹`, and `W2` is the
//! `L²(0,1)` distance between quantile functions. Reported `W2` values are the
//! usual unsquared metric for the cost `|x−y|²`.

use std::path::Path;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cone_metric::{birkhoff_ratio, PositiveMatrix};
use crate::csv_io::write_table_file;
use crate::discrete_bridge::{interpolate, solve_with, CycleRecord, DiscreteBridgeProblem, Domain, SolverOptions};
use crate::markov_prior::{build_heat_kernel, Grid1D, Marginal};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gaussian1D {
    pub mean: f64,
    pub std: f64,
}

impl Gaussian1D {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !mean.is_finite() || !(std > 0.0 && std.is_finite()) {
            return Err(Error::domain(format!("invalid Gaussian N({mean}, {std}²)")));
        }
        Ok(Self { mean, std })
    }

    pub fn density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.std;
        (-0.5 * z * z).exp() / (self.std * (2.0 * std::f64::consts::PI).sqrt())
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let n = Normal::new(self.mean, self.std).expect("validated parameters");
        n.inverse_cdf(u)
    }
}

/// Quantile function sampled on a probability grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Quantile1D {
    probs: Vec<f64>,
    values: Vec<f64>,
}

/// Midpoint probabilities `(k − ½)/m`, `k = 1..m`.
pub fn midpoint_probabilities(m: usize) -> Vec<f64> {
    (1..=m).map(|k| (k as f64 - 0.5) / m as f64).collect()
}

impl Quantile1D {
    pub fn new(probs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.len() != values.len() {
            return Err(Error::dims("probabilities and quantile values must be nonempty and of equal length"));
        }
        if probs.iter().any(|u| !(*u > 0.0 && *u < 1.0)) || probs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("probabilities must be strictly increasing in (0, 1)"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("quantile values must be finite"));
        }
        if let Some(k) = values.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::domain(format!("quantile values decrease at index {}", k + 1)));
        }
        Ok(Self { probs, values })
    }

    pub fn from_gaussian(g: &Gaussian1D, m: usize) -> Result<Self> {
        let probs = midpoint_probabilities(m);
        let values = probs.iter().map(|u| g.quantile(*u)).collect();
        Self::new(probs, values)
    }

    /// Quantiles of a grid marginal, treating cell `i` as uniform mass on
    /// `[x_i − h/2, x_i + h/2]` (piecewise-linear CDF).
    pub fn from_grid_marginal(grid: &Grid1D, p: &Marginal, m: usize) -> Result<Self> {
        if p.len() != grid.len() {
            return Err(Error::dims("marginal and grid lengths differ"));
        }
        let h = grid.spacing();
        let w = p.as_vector();
        let probs = midpoint_probabilities(m);
        let mut values = Vec::with_capacity(m);
        let mut cell = 0;
        let mut below = 0.0;
        for &u in &probs {
            while cell + 1 < w.len() && below + w[cell] < u {
                below += w[cell];
                cell += 1;
            }
            let frac = if w[cell] > 0.0 {
                ((u - below) / w[cell]).clamp(0.0, 1.0)
            } else {
                0.5
            };
            values.push(grid.point(cell) - 0.5 * h + frac * h);
        }
        Self::new(probs, values)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Quadrature weights: the measure of the Voronoi cell of each probability in (0, 1).
    pub fn weights(&self) -> Vec<f64> {
        let n = self.probs.len();
        (0..n)
            .map(|k| {
                let lo = if k == 0 { 0.0 } else { 0.5 * (self.probs[k - 1] + self.probs[k]) };
                let hi = if k + 1 == n { 1.0 } else { 0.5 * (self.probs[k] + self.probs[k + 1]) };
                hi - lo
            })
            .collect()
    }

    fn same_grid(&self, other: &Quantile1D) -> Result<()> {
        if self.probs.len() != other.probs.len()
            || self.probs.iter().zip(&other.probs).any(|(a, b)| (a - b).abs() > 1e-15)
        {
            return Err(Error::dims("quantile functions use different probability grids"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Measure1D {
    Gaussian(Gaussian1D),
    Quantile(Quantile1D),
}

/// Nondecreasing map sampled at the source quantiles.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotoneMap {
    pub source: Vec<f64>,
    pub image: Vec<f64>,
}

impl MonotoneMap {
    /// Piecewise-linear evaluation, extended linearly beyond the end knots.
    pub fn apply(&self, x: f64) -> f64 {
        let s = &self.source;
        let n = s.len();
        if n == 1 {
            return self.image[0] + (x - s[0]);
        }
        let k = s.partition_point(|v| *v <= x).clamp(1, n - 1) - 1;
        let mut j = k + 1;
        while j < n - 1 && s[j] == s[k] {
            j += 1;
        }
        if s[j] == s[k] {
            return self.image[k];
        }
        let w = (x - s[k]) / (s[j] - s[k]);
        self.image[k] + w * (self.image[j] - self.image[k])
    }
}

/// `T = F1⁻¹ ∘ F0` at the quantiles of `rho0`.
pub fn monotone_map_1d(rho0: &Quantile1D, rho1: &Quantile1D) -> Result<MonotoneMap> {
    rho0.same_grid(rho1)?;
    Ok(MonotoneMap {
        source: rho0.values.clone(),
        image: rho1.values.clone(),
    })
}

fn check_time(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::domain(format!("interpolation time {t} outside [0, 1]")));
    }
    Ok(())
}

pub fn displacement_interpolation(rho0: &Measure1D, rho1: &Measure1D, t: f64) -> Result<Measure1D> {
    check_time(t)?;
    match (rho0, rho1) {
        (Measure1D::Gaussian(a), Measure1D::Gaussian(b)) => Ok(Measure1D::Gaussian(if t == 0.0 {
            *a
        } else if t == 1.0 {
            *b
        } else {
            Gaussian1D::new((1.0 - t) * a.mean + t * b.mean, (1.0 - t) * a.std + t * b.std)?
        })),
        (Measure1D::Quantile(a), Measure1D::Quantile(b)) => {
            a.same_grid(b)?;
            let values = if t == 0.0 {
                a.values.clone()
            } else if t == 1.0 {
                b.values.clone()
            } else {
                a.values
                    .iter()
                    .zip(&b.values)
                    .map(|(x, y)| (1.0 - t) * x + t * y)
                    .collect()
            };
            Ok(Measure1D::Quantile(Quantile1D::new(a.probs.clone(), values)?))
        }
        _ => Err(Error::domain("both endpoints must use the same representation")),
    }
}

pub fn wasserstein2(a: &Measure1D, b: &Measure1D) -> Result<f64> {
    match (a, b) {
        (Measure1D::Gaussian(a), Measure1D::Gaussian(b)) => Ok((a.mean - b.mean).hypot(a.std - b.std)),
        (Measure1D::Quantile(a), Measure1D::Quantile(b)) => {
            a.same_grid(b)?;
            let s: f64 = a
                .weights()
                .iter()
                .zip(a.values.iter().zip(&b.values))
                .map(|(w, (x, y))| w * (x - y) * (x - y))
                .sum();
            Ok(s.sqrt())
        }
        _ => Err(Error::domain("both measures must use the same representation")),
    }
}

/// Closed-form Gaussian geodesic with velocity `v = a(t)x + b(t)` and potential
/// `ψ = ½a(t)x² + b(t)x + c(t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianPath {
    pub start: Gaussian1D,
    pub end: Gaussian1D,
    /// Offset added to the quadratic coefficient of `ψ` (zero for the true path).
    pub psi_perturbation: f64,
}

impl GaussianPath {
    pub fn new(start: Gaussian1D, end: Gaussian1D) -> Self {
        Self {
            start,
            end,
            psi_perturbation: 0.0,
        }
    }

    pub fn with_psi_perturbation(mut self, delta: f64) -> Self {
        self.psi_perturbation = delta;
        self
    }

    fn d_std(&self) -> f64 {
        self.end.std - self.start.std
    }

    fn kappa(&self) -> f64 {
        (self.end.mean - self.start.mean) * self.start.std - self.d_std() * self.start.mean
    }

    pub fn mean(&self, t: f64) -> f64 {
        self.start.mean + t * (self.end.mean - self.start.mean)
    }

    pub fn std(&self, t: f64) -> f64 {
        self.start.std + t * self.d_std()
    }

    pub fn a(&self, t: f64) -> f64 {
        self.d_std() / self.std(t)
    }

    pub fn b(&self, t: f64) -> f64 {
        self.kappa() / self.std(t)
    }

    pub fn c(&self, t: f64) -> f64 {
        let k = self.kappa();
        -0.5 * k * k * t / (self.start.std * self.std(t))
    }

    pub fn velocity(&self, x: f64, t: f64) -> f64 {
        self.a(t) * x + self.b(t)
    }

    pub fn psi(&self, x: f64, t: f64) -> f64 {
        0.5 * (self.a(t) + self.psi_perturbation) * x * x + self.b(t) * x + self.c(t)
    }

    pub fn density(&self, x: f64, t: f64) -> f64 {
        Gaussian1D {
            mean: self.mean(t),
            std: self.std(t),
        }
        .density(x)
    }

    /// `∂ψ/∂t + ½(∂ψ/∂x)²` from the analytic time derivatives of the coefficients.
    pub fn hj_residual_at(&self, x: f64, t: f64) -> f64 {
        let s = self.std(t);
        let ds = self.d_std();
        let k = self.kappa();
        let da = -ds * ds / (s * s);
        let db = -k * ds / (s * s);
        let dc = -0.5 * k * k / (s * s);
        let grad = (self.a(t) + self.psi_perturbation) * x + self.b(t);
        0.5 * da * x * x + db * x + dc + 0.5 * grad * grad
    }

    /// `∂ρ/∂t + ∂(ρ ∂ψ/∂x)/∂x` by central differences with step `h`.
    pub fn continuity_residual_at(&self, x: f64, t: f64, h: f64) -> f64 {
        let flux = |x: f64| self.density(x, t) * ((self.a(t) + self.psi_perturbation) * x + self.b(t));
        let dt = (self.density(x, t + h) - self.density(x, t - h)) / (2.0 * h);
        let dx = (flux(x + h) - flux(x - h)) / (2.0 * h);
        dt + dx
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DisplacementPath {
    Gaussian(GaussianPath),
    Quantile(Quantile1D, Quantile1D),
}

impl DisplacementPath {
    pub fn new(rho0: &Measure1D, rho1: &Measure1D) -> Result<Self> {
        match (rho0, rho1) {
            (Measure1D::Gaussian(a), Measure1D::Gaussian(b)) => Ok(Self::Gaussian(GaussianPath::new(*a, *b))),
            (Measure1D::Quantile(a), Measure1D::Quantile(b)) => {
                a.same_grid(b)?;
                Ok(Self::Quantile(a.clone(), b.clone()))
            }
            _ => Err(Error::domain("both endpoints must use the same representation")),
        }
    }

    pub fn at(&self, t: f64) -> Result<Measure1D> {
        match self {
            Self::Gaussian(p) => displacement_interpolation(
                &Measure1D::Gaussian(p.start),
                &Measure1D::Gaussian(p.end),
                t,
            ),
            Self::Quantile(a, b) => {
                displacement_interpolation(&Measure1D::Quantile(a.clone()), &Measure1D::Quantile(b.clone()), t)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HjReport {
    /// Max `|∂ψ/∂t + ½(∂ψ/∂x)²|` over the lattice.
    pub hamilton_jacobi: f64,
    /// Max finite-difference continuity-equation residual, step = grid spacing.
    pub continuity: f64,
}

pub fn hj_residual(path: &DisplacementPath, grid: &Grid1D, times: &[f64]) -> Result<HjReport> {
    let DisplacementPath::Gaussian(p) = path else {
        return Err(Error::Unsupported(
            "Hamilton-Jacobi residuals need the smooth Gaussian path".into(),
        ));
    };
    let h = grid.spacing();
    let mut report = HjReport {
        hamilton_jacobi: 0.0,
        continuity: 0.0,
    };
    for &t in times {
        check_time(t)?;
        if p.std(t - h) <= 0.0 || p.std(t + h) <= 0.0 {
            return Err(Error::domain("time step too large for the finite-difference stencil"));
        }
        for x in grid.points() {
            report.hamilton_jacobi = report.hamilton_jacobi.max(p.hj_residual_at(x, t).abs());
            report.continuity = report.continuity.max(p.continuity_residual_at(x, t, h).abs());
        }
    }
    Ok(report)
}

/// Mid-time variance of the entropic interpolation between two Gaussians for a
/// Brownian prior of diffusivity `epsilon` over unit time.
pub fn entropic_mid_variance(s0: f64, s1: f64, epsilon: f64) -> f64 {
    let c = ((epsilon * epsilon + 4.0 * s0 * s0 * s1 * s1).sqrt() - epsilon) / 2.0;
    0.25 * s0 * s0 + 0.25 * s1 * s1 + 0.5 * c + 0.25 * epsilon
}

#[derive(Clone, Copy, Debug)]
pub struct StudyOptions {
    pub n_time_steps: usize,
    pub n_quantiles: usize,
    pub tol: f64,
    pub max_cycles: usize,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            n_time_steps: 8,
            n_quantiles: 2000,
            tol: 1e-10,
            max_cycles: 200_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StudyEntry {
    pub epsilon: f64,
    pub w2_mid: f64,
    pub bridge_cycles: usize,
    /// Squared Birkhoff ratio of the composed prior.
    pub contraction_ratio_bound: f64,
    pub convergence_log: Vec<CycleRecord>,
}

#[derive(Clone, Debug)]
pub struct ZeroNoiseReport {
    pub entries: Vec<StudyEntry>,
    /// `W2` between the grid discretisation of `ρ0` and `ρ0` itself.
    pub discretization_floor: f64,
}

impl ZeroNoiseReport {
    /// Whether `W2_mid` strictly decreases with `ε` for every entry above the floor.
    pub fn strictly_decreasing_above_floor(&self) -> bool {
        self.entries
            .windows(2)
            .all(|w| w[1].w2_mid <= self.discretization_floor || w[1].w2_mid < w[0].w2_mid)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let header: Vec<String> = ["epsilon", "W2_mid", "bridge_cycles", "contraction_ratio_bound", "discretization_floor"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let rows = self.entries.iter().map(|e| {
            vec![
                e.epsilon,
                e.w2_mid,
                e.bridge_cycles as f64,
                e.contraction_ratio_bound,
                self.discretization_floor,
            ]
        });
        write_table_file(path, &header, rows)
    }
}

/// Margin the grid must leave beyond `μ ± 4σ` of both endpoints: three
/// one-step standard deviations of the widest heat kernel.
pub fn required_margin(eps_max: f64, n_time_steps: usize) -> f64 {
    3.0 * (eps_max / n_time_steps as f64).sqrt()
}

/// Entropic (bridge) versus displacement mid-marginals for decreasing noise.
pub fn zero_noise_study(
    rho0: &Gaussian1D,
    rho1: &Gaussian1D,
    grid: &Grid1D,
    epsilons: &[f64],
    opts: &StudyOptions,
) -> Result<ZeroNoiseReport> {
    if epsilons.is_empty() {
        return Err(Error::domain("need at least one epsilon"));
    }
    if epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) || epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::domain("epsilons must be positive and strictly decreasing"));
    }
    let n = opts.n_time_steps;
    if n < 2 || n % 2 != 0 {
        return Err(Error::domain("the number of time steps must be even and at least 2"));
    }
    if opts.n_quantiles < 1 {
        return Err(Error::domain("need at least one quantile"));
    }
    let margin = required_margin(epsilons[0], n);
    let need_lo = (rho0.mean - 4.0 * rho0.std).min(rho1.mean - 4.0 * rho1.std) - margin;
    let need_hi = (rho0.mean + 4.0 * rho0.std).max(rho1.mean + 4.0 * rho1.std) + margin;
    if grid.lower() > need_lo || grid.upper() < need_hi {
        return Err(Error::domain(format!(
            "grid [{}, {}] too narrow; need at least [{need_lo}, {need_hi}]",
            grid.lower(),
            grid.upper()
        )));
    }

    let p0 = Marginal::gaussian(grid, rho0.mean, rho0.std)?;
    let p1 = Marginal::gaussian(grid, rho1.mean, rho1.std)?;
    let m = opts.n_quantiles;
    let floor = wasserstein2(
        &Measure1D::Quantile(Quantile1D::from_grid_marginal(grid, &p0, m)?),
        &Measure1D::Quantile(Quantile1D::from_gaussian(rho0, m)?),
    )?;
    let displacement_mid = match displacement_interpolation(
        &Measure1D::Gaussian(*rho0),
        &Measure1D::Gaussian(*rho1),
        0.5,
    )? {
        Measure1D::Gaussian(g) => Quantile1D::from_gaussian(&g, m)?,
        Measure1D::Quantile(_) => unreachable!("Gaussian endpoints interpolate to a Gaussian"),
    };
    let dt = 1.0 / n as f64;
    let solver = SolverOptions {
        tol: opts.tol,
        max_cycles: opts.max_cycles,
        domain: Domain::Auto,
    };

    let entries = epsilons
        .par_iter()
        .map(|&eps| -> Result<StudyEntry> {
            let step = build_heat_kernel(grid, eps, dt)?;
            let problem = DiscreteBridgeProblem::from_chain(vec![step; n], p0.clone(), p1.clone())?;
            let ratio = birkhoff_ratio(&PositiveMatrix::new(problem.prior().matrix().clone())?)?;
            let sol = solve_with(&problem, &solver, None)?;
            let marginals = interpolate(&sol, &problem)?;
            let mid = Quantile1D::from_grid_marginal(grid, &marginals[n / 2], m)?;
            Ok(StudyEntry {
                epsilon: eps,
                w2_mid: wasserstein2(&Measure1D::Quantile(mid), &Measure1D::Quantile(displacement_mid.clone()))?,
                bridge_cycles: sol.iterations,
                contraction_ratio_bound: ratio * ratio,
                convergence_log: sol.convergence_log,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ZeroNoiseReport {
        entries,
        discretization_floor: floor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(m: f64, s: f64) -> Gaussian1D {
        Gaussian1D::new(m, s).unwrap()
    }

    #[test]
    fn identity_map_for_equal_measures() {
        let q = Quantile1D::from_gaussian(&g(0.3, 1.2), 50).unwrap();
        let t = monotone_map_1d(&q, &q).unwrap();
        assert_eq!(t.source, t.image);
        assert!((t.apply(0.77) - 0.77).abs() < 1e-12);
    }

    #[test]
    fn scaling_and_shift_maps() {
        let q0 = Quantile1D::from_gaussian(&g(0.0, 1.0), 999).unwrap();
        let q4 = Quantile1D::from_gaussian(&g(0.0, 2.0), 999).unwrap();
        let q3 = Quantile1D::from_gaussian(&g(3.0, 1.0), 999).unwrap();
        let t = monotone_map_1d(&q0, &q4).unwrap();
        assert!(t.source.iter().zip(&t.image).all(|(x, y)| (y - 2.0 * x).abs() <= 1e-10));
        let s = monotone_map_1d(&q0, &q3).unwrap();
        assert!(s.source.iter().zip(&s.image).all(|(x, y)| (y - x - 3.0).abs() <= 1e-10));
    }

    #[test]
    fn rejects_non_monotone_quantiles() {
        assert!(Quantile1D::new(vec![0.25, 0.75], vec![1.0, 0.0]).is_err());
        assert!(Quantile1D::new(vec![0.75, 0.25], vec![0.0, 1.0]).is_err());
        let a = Quantile1D::from_gaussian(&g(0.0, 1.0), 10).unwrap();
        let b = Quantile1D::from_gaussian(&g(0.0, 1.0), 11).unwrap();
        assert!(monotone_map_1d(&a, &b).is_err());
    }

    #[test]
    fn gaussian_interpolation_examples() {
        let a = Measure1D::Gaussian(g(0.0, 1.0));
        let b = Measure1D::Gaussian(g(0.0, 2.0));
        assert_eq!(displacement_interpolation(&a, &b, 0.0).unwrap(), a);
        assert_eq!(displacement_interpolation(&a, &b, 0.5).unwrap(), Measure1D::Gaussian(g(0.0, 1.5)));
        let c = Measure1D::Gaussian(g(-1.0, 1.0));
        let d = Measure1D::Gaussian(g(1.0, 1.0));
        assert_eq!(displacement_interpolation(&c, &d, 0.5).unwrap(), Measure1D::Gaussian(g(0.0, 1.0)));
        assert!(displacement_interpolation(&a, &b, 1.5).is_err());
    }

    #[test]
    fn gaussian_w2_examples() {
        let n01 = Measure1D::Gaussian(g(0.0, 1.0));
        assert_eq!(wasserstein2(&n01, &n01).unwrap(), 0.0);
        assert!((wasserstein2(&n01, &Measure1D::Gaussian(g(3.0, 1.0))).unwrap() - 3.0).abs() <= 1e-12);
        assert!((wasserstein2(&n01, &Measure1D::Gaussian(g(0.0, 2.0))).unwrap() - 1.0).abs() <= 1e-12);
        let q = Measure1D::Quantile(Quantile1D::from_gaussian(&g(0.0, 1.0), 5).unwrap());
        assert!(wasserstein2(&n01, &q).is_err());
    }

    #[test]
    fn quantile_w2_of_translate_is_shift() {
        let a = Measure1D::Quantile(Quantile1D::from_gaussian(&g(0.0, 1.0), 100).unwrap());
        let b = Measure1D::Quantile(Quantile1D::from_gaussian(&g(2.5, 1.0), 100).unwrap());
        assert!((wasserstein2(&a, &b).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn hj_residual_examples() {
        let grid = Grid1D::new(-4.0, 4.0, 201).unwrap();
        let times = [0.0, 0.25, 0.5, 0.75, 1.0];
        let still = DisplacementPath::new(&Measure1D::Gaussian(g(0.0, 1.0)), &Measure1D::Gaussian(g(0.0, 1.0))).unwrap();
        let r = hj_residual(&still, &grid, &times).unwrap();
        assert_eq!(r.hamilton_jacobi, 0.0);
        assert!(r.continuity < 1e-12);

        let path = GaussianPath::new(g(0.0, 1.0), g(0.0, 2.0));
        let r = hj_residual(&DisplacementPath::Gaussian(path), &grid, &times).unwrap();
        assert!(r.hamilton_jacobi <= 1e-8);
        let perturbed = hj_residual(&DisplacementPath::Gaussian(path.with_psi_perturbation(1e-2)), &grid, &times).unwrap();
        assert!(perturbed.hamilton_jacobi >= 1e-3);
    }

    #[test]
    fn continuity_residual_is_second_order() {
        let path = DisplacementPath::Gaussian(GaussianPath::new(g(-1.0, 0.5), g(1.0, 1.5)));
        let coarse = hj_residual(&path, &Grid1D::new(-4.0, 4.0, 81).unwrap(), &[0.5]).unwrap();
        let fine = hj_residual(&path, &Grid1D::new(-4.0, 4.0, 161).unwrap(), &[0.5]).unwrap();
        let order = (coarse.continuity / fine.continuity).log2();
        assert!(order > 1.8, "observed order {order}");
    }

    #[test]
    fn quantile_path_is_unsupported_for_hj() {
        let q = Quantile1D::from_gaussian(&g(0.0, 1.0), 10).unwrap();
        let path = DisplacementPath::new(&Measure1D::Quantile(q.clone()), &Measure1D::Quantile(q)).unwrap();
        let grid = Grid1D::new(-1.0, 1.0, 5).unwrap();
        assert!(matches!(hj_residual(&path, &grid, &[0.5]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn grid_quantiles_match_gaussian() {
        let grid = Grid1D::new(-6.0, 6.0, 1201).unwrap();
        let p = Marginal::gaussian(&grid, 0.5, 1.0).unwrap();
        let w = wasserstein2(
            &Measure1D::Quantile(Quantile1D::from_grid_marginal(&grid, &p, 500).unwrap()),
            &Measure1D::Quantile(Quantile1D::from_gaussian(&g(0.5, 1.0), 500).unwrap()),
        )
        .unwrap();
        assert!(w < 1e-3, "{w}");
    }

    #[test]
    fn entropic_variance_oracle_limits() {
        assert!((entropic_mid_variance(0.5, 0.5, 0.0) - 0.25).abs() < 1e-15);
        // ε → ∞: ¼s0² + ¼s1² + ¼ε dominates
        let v = entropic_mid_variance(1.0, 1.0, 1e6);
        assert!((v - (0.5 + 0.25e6)).abs() / v < 1e-5);
    }

    #[test]
    fn study_matches_entropic_oracle_for_equal_endpoints() {
        let rho = g(0.0, 0.5);
        let grid = Grid1D::new(-5.0, 5.0, 401).unwrap();
        let eps = 0.3;
        let report = zero_noise_study(&rho, &rho, &grid, &[eps], &StudyOptions::default()).unwrap();
        let expected = entropic_mid_variance(0.5, 0.5, eps).sqrt() - 0.5;
        let got = report.entries[0].w2_mid;
        assert!((got - expected).abs() < 1e-3, "got {got}, expected {expected}");
    }

    #[test]
    fn study_validates_inputs() {
        let grid = Grid1D::new(-4.0, 4.0, 101).unwrap();
        let (a, b) = (g(-1.0, 0.5), g(1.0, 0.5));
        let opts = StudyOptions::default();
        assert!(zero_noise_study(&a, &b, &grid, &[0.1, 0.2], &opts).is_err());
        assert!(zero_noise_study(&a, &b, &grid, &[], &opts).is_err());
        assert!(zero_noise_study(&a, &b, &grid, &[50.0], &opts).is_err());
        let odd = StudyOptions { n_time_steps: 7, ..opts };
        assert!(zero_noise_study(&a, &b, &grid, &[0.1], &odd).is_err());
    }
}
