//! Minimum-energy steering of a linear stochastic system between Gaussian laws.
//!
//! For `dX = A X dt + B u dt + B dW` the optimal feedback is `u = −Bᵀ Π(t) x`,
//! where `Π` and `H` solve
//!
//! ```text
//! Π̇ = −AᵀΠ − ΠA + ΠBBᵀΠ
//! Ḣ = −AᵀH − HA − HBBᵀH
//! Π(0) + H(0) = Σ0⁻¹,   Π(t_f) + H(t_f) = Σ1⁻¹
//! ```
//!
//! and `Σ(t)⁻¹ = Π(t) + H(t)` along the controlled path. The two flows are
//! only coupled through the boundary conditions.
//!
//! The boundary value problem is seeded with the exact Gaussian endpoint
//! coupling (prior transition `N(Φ x0, M)`, `Φ = e^{A t_f}`, `M` the
//! reachability Gramian), which fixes `H(0)`; Newton iterations on `Π(0)`
//! then drive the residual of the discrete RK4 flow below the tolerance.
//! Noise intensity is carried by `B` itself: scale `B = B1` by `√ε`.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{
    check_spd, lstsq, min_eigenvalue, numerical_rank, spd_inverse, sym_fn, symmetrize,
    transition_and_gramian, unvech, vech,
};
use crate::{Error, Result};

/// `dX = A X dt + B u dt + B1 dW` on `[0, horizon]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub horizon: f64,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, b1: DMatrix<f64>, horizon: f64) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() || n == 0 {
            return Err(Error::dims("A must be square and nonempty"));
        }
        if b.nrows() != n || b1.nrows() != n {
            return Err(Error::dims(format!(
                "B ({}x{}) and B1 ({}x{}) must have {n} rows",
                b.nrows(),
                b.ncols(),
                b1.nrows(),
                b1.ncols()
            )));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::domain("horizon must be positive"));
        }
        Ok(Self { a, b, b1, horizon })
    }

    pub fn with_horizon(mut self, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::domain("horizon must be positive"));
        }
        self.horizon = horizon;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    /// True when control and noise enter through the same channel.
    pub fn same_channels(&self) -> bool {
        self.b.shape() == self.b1.shape()
            && (&self.b - &self.b1).amax() <= 1e-12 * (1.0 + self.b.amax())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianState {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianState {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != mean.len() {
            return Err(Error::dims("mean and covariance sizes differ"));
        }
        check_spd(&covariance, "covariance")?;
        Ok(Self { mean, covariance })
    }

    pub fn centered(covariance: DMatrix<f64>) -> Result<Self> {
        let n = covariance.nrows();
        Self::new(DVector::zeros(n), covariance)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Rank of `[B, AB, …, A^{n−1}B]`.
pub fn controllability_rank(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<usize> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n {
        return Err(Error::dims("A must be square and B must have as many rows as A"));
    }
    let m = b.ncols();
    let mut ctrb = DMatrix::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        ctrb.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    Ok(numerical_rank(&ctrb))
}

/// Riccati solution on a uniform time grid.
#[derive(Clone, Debug)]
pub struct RiccatiSchedule {
    pub times: Vec<f64>,
    pub pi: Vec<DMatrix<f64>>,
    pub h: Vec<DMatrix<f64>>,
    /// Closed-loop covariance at each knot.
    pub sigma: Vec<DMatrix<f64>>,
    /// Mean path of the deterministic transfer (zero for centred endpoints).
    pub mean: Vec<DVector<f64>>,
    /// Open-loop input steering the mean.
    pub feedforward: Vec<DVector<f64>>,
    pub b: DMatrix<f64>,
    /// `‖Π(0)+H(0)−Σ0⁻¹‖_F` and `‖Π(t_f)+H(t_f)−Σ1⁻¹‖_F`.
    pub boundary_residuals: (f64, f64),
    pub newton_iterations: usize,
}

impl RiccatiSchedule {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    /// Feedback gain `K(t_k) = Bᵀ Π(t_k)`.
    pub fn gain(&self, k: usize) -> DMatrix<f64> {
        self.b.tr_mul(&self.pi[k])
    }

    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let t0 = self.times[0];
        let tf = self.horizon();
        let slack = 1e-12 * (1.0 + tf.abs());
        if !(t >= t0 - slack && t <= tf + slack) {
            return Err(Error::domain(format!(
                "time {t} outside schedule horizon [{t0}, {tf}]"
            )));
        }
        let n = self.times.len() - 1;
        let h = (tf - t0) / n as f64;
        let k = (((t - t0) / h).floor().max(0.0) as usize).min(n - 1);
        let w = ((t - self.times[k]) / h).clamp(0.0, 1.0);
        Ok((k, w))
    }

    /// Gain at any time in the horizon, linearly interpolated between knots.
    pub fn gain_at(&self, t: f64) -> Result<DMatrix<f64>> {
        let (k, w) = self.locate(t)?;
        Ok(self.gain(k) * (1.0 - w) + self.gain(k + 1) * w)
    }

    /// `u(t, x) = −K(t)(x − m(t)) + v(t)`.
    pub fn control(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (k, w) = self.locate(t)?;
        let gain = self.gain(k) * (1.0 - w) + self.gain(k + 1) * w;
        let m = &self.mean[k] * (1.0 - w) + &self.mean[k + 1] * w;
        let v = &self.feedforward[k] * (1.0 - w) + &self.feedforward[k + 1] * w;
        Ok(-(gain * (x - m)) + v)
    }

    pub fn terminal_covariance(&self) -> &DMatrix<f64> {
        self.sigma.last().expect("schedule has at least two knots")
    }
}

fn pi_rate(a: &DMatrix<f64>, bbt: &DMatrix<f64>, pi: &DMatrix<f64>) -> DMatrix<f64> {
    -(a.transpose() * pi) - pi * a + pi * bbt * pi
}

fn h_rate(a: &DMatrix<f64>, bbt: &DMatrix<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
    -(a.transpose() * h) - h * a - h * bbt * h
}

fn sigma_rate(
    a: &DMatrix<f64>,
    bbt: &DMatrix<f64>,
    noise: &DMatrix<f64>,
    pi: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
) -> DMatrix<f64> {
    let closed = a - bbt * pi;
    &closed * sigma + sigma * closed.transpose() + noise
}

fn rk4<F: Fn(&DMatrix<f64>) -> DMatrix<f64>>(f: F, x: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let k1 = f(x);
    let k2 = f(&(x + &k1 * (h / 2.0)));
    let k3 = f(&(x + &k2 * (h / 2.0)));
    let k4 = f(&(x + &k3 * h));
    symmetrize(&(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)))
}

/// One RK4 step of the closed-loop covariance, integrated jointly with `Π`.
fn rk4_sigma(
    a: &DMatrix<f64>,
    bbt: &DMatrix<f64>,
    noise: &DMatrix<f64>,
    pi: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    h: f64,
) -> DMatrix<f64> {
    let p1 = pi.clone();
    let kp1 = pi_rate(a, bbt, &p1);
    let ks1 = sigma_rate(a, bbt, noise, &p1, sigma);
    let p2 = &p1 + &kp1 * (h / 2.0);
    let kp2 = pi_rate(a, bbt, &p2);
    let ks2 = sigma_rate(a, bbt, noise, &p2, &(sigma + &ks1 * (h / 2.0)));
    let p3 = &p1 + &kp2 * (h / 2.0);
    let kp3 = pi_rate(a, bbt, &p3);
    let ks3 = sigma_rate(a, bbt, noise, &p3, &(sigma + &ks2 * (h / 2.0)));
    let p4 = &p1 + &kp3 * h;
    let ks4 = sigma_rate(a, bbt, noise, &p4, &(sigma + &ks3 * h));
    symmetrize(&(sigma + (ks1 + ks2 * 2.0 + ks3 * 2.0 + ks4) * (h / 6.0)))
}

struct Flows {
    pi: Vec<DMatrix<f64>>,
    h: Vec<DMatrix<f64>>,
}

fn integrate_flows(sys: &LinearSystem, pi0: &DMatrix<f64>, h0: &DMatrix<f64>, n_grid: usize) -> Result<Flows> {
    let bbt = &sys.b * sys.b.transpose();
    let step = sys.horizon / n_grid as f64;
    let mut pi = Vec::with_capacity(n_grid + 1);
    let mut h = Vec::with_capacity(n_grid + 1);
    pi.push(pi0.clone());
    h.push(h0.clone());
    for k in 0..n_grid {
        let next_pi = rk4(|p| pi_rate(&sys.a, &bbt, p), &pi[k], step);
        let next_h = rk4(|x| h_rate(&sys.a, &bbt, x), &h[k], step);
        if !next_pi.iter().chain(next_h.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonConvergence {
                iterations: k + 1,
                last_change: f64::INFINITY,
                detail: format!("Riccati flow escaped to infinity near t = {}", (k + 1) as f64 * step),
            });
        }
        pi.push(next_pi);
        h.push(next_h);
    }
    Ok(Flows { pi, h })
}

/// Closed-form `Π(0)` from the exact Gaussian endpoint coupling.
fn boundary_seed(sys: &LinearSystem, sigma0: &DMatrix<f64>, sigma1: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = sys.dim();
    let bbt = &sys.b * sys.b.transpose();
    let (phi, gram) = transition_and_gramian(&sys.a, &bbt, sys.horizon);
    let gram_inv = spd_inverse(&gram)
        .map_err(|_| Error::Infeasible("reachability Gramian is singular".into()))?;
    let s0_inv = spd_inverse(sigma0)?;

    let g = sigma0 * phi.transpose() * &gram_inv;
    let r = symmetrize(&(g.transpose() * &s0_inv * &g));
    let r_half = sym_fn(&r, f64::sqrt);
    let r_inv_half = sym_fn(&r, |x| 1.0 / x.sqrt());
    let w = symmetrize(&(&r_half * sigma1 * &r_half));
    let eye = DMatrix::<f64>::identity(n, n);
    let d = sym_fn(&(w + &eye * 0.25), f64::sqrt) - &eye * 0.5;
    let cond = symmetrize(&(&r_inv_half * d * &r_inv_half));
    let cross = g * cond;

    let mut joint = DMatrix::zeros(2 * n, 2 * n);
    joint.view_mut((0, 0), (n, n)).copy_from(sigma0);
    joint.view_mut((0, n), (n, n)).copy_from(&cross);
    joint.view_mut((n, 0), (n, n)).copy_from(&cross.transpose());
    joint.view_mut((n, n), (n, n)).copy_from(sigma1);
    let joint_inv = spd_inverse(&symmetrize(&joint))
        .map_err(|_| Error::domain("endpoint coupling covariance is not positive definite"))?;
    let h0 = symmetrize(&(joint_inv.view((0, 0), (n, n)) - phi.transpose() * &gram_inv * &phi));
    Ok(symmetrize(&(s0_inv - h0)))
}

/// Solves the boundary-coupled Riccati pair on `n_grid` RK4 steps.
pub fn solve_gauss_bridge(
    sys: &LinearSystem,
    start: &GaussianState,
    end: &GaussianState,
    n_grid: usize,
    tol: f64,
) -> Result<RiccatiSchedule> {
    let n = sys.dim();
    if start.dim() != n || end.dim() != n {
        return Err(Error::dims("endpoint states must match the system dimension"));
    }
    if !sys.same_channels() {
        return Err(Error::Unsupported(
            "control and noise channels differ (B != B1); only B = B1 is supported".into(),
        ));
    }
    if n_grid < 2 {
        return Err(Error::domain("n_grid must be at least 2"));
    }
    if !(tol > 0.0) {
        return Err(Error::domain("tolerance must be positive"));
    }
    let rank = controllability_rank(&sys.a, &sys.b)?;
    if rank < n {
        return Err(Error::Infeasible(format!(
            "(A, B) has controllability rank {rank} < {n}"
        )));
    }
    let s0_inv = spd_inverse(&start.covariance)?;
    let s1_inv = spd_inverse(&end.covariance)?;

    let residual = |pi0: &DMatrix<f64>| -> Result<(DMatrix<f64>, Flows)> {
        let h0 = symmetrize(&(&s0_inv - pi0));
        let flows = integrate_flows(sys, pi0, &h0, n_grid)?;
        let r = &flows.pi[n_grid] + &flows.h[n_grid] - &s1_inv;
        Ok((symmetrize(&r), flows))
    };

    const MAX_NEWTON: usize = 30;
    let mut pi0 = boundary_seed(sys, &start.covariance, &end.covariance)?;
    let (mut r, mut flows) = residual(&pi0)?;
    let mut iterations = 0;
    while r.norm() > tol {
        if iterations == MAX_NEWTON {
            return Err(Error::NonConvergence {
                iterations,
                last_change: r.norm(),
                detail: "boundary coupling residual did not reach the tolerance".into(),
            });
        }
        iterations += 1;
        let x = vech(&pi0);
        let rv = vech(&r);
        let p = x.len();
        let mut jac = DMatrix::zeros(p, p);
        for c in 0..p {
            let delta = 1e-6 * (1.0 + x[c].abs());
            let mut xp = x.clone();
            xp[c] += delta;
            let (rp, _) = residual(&unvech(&xp, n))?;
            jac.set_column(c, &((vech(&rp) - &rv) / delta));
        }
        let step = match jac.clone().lu().solve(&rv) {
            Some(s) => s,
            None => lstsq(&jac, &rv).0,
        };
        let candidate = unvech(&(x - step), n);
        let (rc, fc) = residual(&candidate)?;
        pi0 = candidate;
        r = rc;
        flows = fc;
    }

    let h0_res = (&flows.pi[0] + &flows.h[0] - &s0_inv).norm();
    let bbt = &sys.b * sys.b.transpose();
    let noise = &sys.b1 * sys.b1.transpose();
    let step = sys.horizon / n_grid as f64;
    let times: Vec<f64> = (0..=n_grid)
        .map(|k| if k == n_grid { sys.horizon } else { k as f64 * step })
        .collect();

    for (k, (p, h)) in flows.pi.iter().zip(&flows.h).enumerate() {
        if min_eigenvalue(&(p + h)) <= 0.0 {
            return Err(Error::domain(format!(
                "Π + H lost positive definiteness at t = {}",
                times[k]
            )));
        }
    }

    let mut sigma = Vec::with_capacity(n_grid + 1);
    sigma.push(start.covariance.clone());
    for k in 0..n_grid {
        let next = rk4_sigma(&sys.a, &bbt, &noise, &flows.pi[k], &sigma[k], step);
        sigma.push(next);
    }
    let terminal_error = (&sigma[n_grid] - &end.covariance).norm();
    if terminal_error > 10.0 * tol {
        return Err(Error::NonConvergence {
            iterations,
            last_change: terminal_error,
            detail: format!(
                "closed-loop terminal covariance misses the target by {terminal_error:e}; refine the grid"
            ),
        });
    }

    let (mean, feedforward) = mean_transfer(sys, &start.mean, &end.mean, &times)?;

    Ok(RiccatiSchedule {
        times,
        pi: flows.pi,
        h: flows.h,
        sigma,
        mean,
        feedforward,
        b: sys.b.clone(),
        boundary_residuals: (h0_res, r.norm()),
        newton_iterations: iterations,
    })
}

/// Minimum-energy deterministic transfer of the mean,
/// `v(t) = Bᵀ e^{Aᵀ(t_f − t)} G⁻¹ (μ1 − e^{A t_f} μ0)`.
fn mean_transfer(
    sys: &LinearSystem,
    mu0: &DVector<f64>,
    mu1: &DVector<f64>,
    times: &[f64],
) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    let n = sys.dim();
    let m = sys.n_inputs();
    if mu0.iter().chain(mu1.iter()).all(|v| *v == 0.0) {
        return Ok((vec![DVector::zeros(n); times.len()], vec![DVector::zeros(m); times.len()]));
    }
    let bbt = &sys.b * sys.b.transpose();
    let (phi, gram) = transition_and_gramian(&sys.a, &bbt, sys.horizon);
    let gram_inv = spd_inverse(&gram)
        .map_err(|_| Error::Infeasible("reachability Gramian is singular".into()))?;
    let lambda = gram_inv * (mu1 - &phi * mu0);
    let v_at = |t: f64| -> DVector<f64> {
        let back = (sys.a.transpose() * (sys.horizon - t)).exp();
        sys.b.transpose() * back * &lambda
    };
    let mut mean = vec![mu0.clone()];
    for k in 0..times.len() - 1 {
        let (t, h) = (times[k], times[k + 1] - times[k]);
        let f = |t: f64, x: &DVector<f64>| &sys.a * x + &sys.b * v_at(t);
        let x = &mean[k];
        let k1 = f(t, x);
        let k2 = f(t + h / 2.0, &(x + &k1 * (h / 2.0)));
        let k3 = f(t + h / 2.0, &(x + &k2 * (h / 2.0)));
        let k4 = f(t + h, &(x + &k3 * h));
        mean.push(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0));
    }
    let ff = times.iter().map(|t| v_at(*t)).collect();
    Ok((mean, ff))
}

/// Re-integrates the closed-loop covariance from `start` under the schedule's gains.
pub fn covariance_path(
    schedule: &RiccatiSchedule,
    sys: &LinearSystem,
    start: &GaussianState,
) -> Result<Vec<DMatrix<f64>>> {
    let n = sys.dim();
    if start.dim() != n || schedule.pi.first().map(|p| p.nrows()) != Some(n) {
        return Err(Error::dims("schedule, system and start state disagree on dimension"));
    }
    let bbt = &sys.b * sys.b.transpose();
    let noise = &sys.b1 * sys.b1.transpose();
    let mut out = Vec::with_capacity(schedule.len());
    out.push(start.covariance.clone());
    for k in 0..schedule.len() - 1 {
        let h = schedule.times[k + 1] - schedule.times[k];
        let next = rk4_sigma(&sys.a, &bbt, &noise, &schedule.pi[k], &out[k], h);
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::domain(format!(
                "covariance integration failed at t = {}",
                schedule.times[k + 1]
            )));
        }
        if min_eigenvalue(&next) <= 0.0 {
            return Err(Error::domain(format!(
                "covariance lost positive definiteness at t = {}",
                schedule.times[k + 1]
            )));
        }
        out.push(next);
    }
    Ok(out)
}

/// Trapezoidal `∫ E|u|² dt = ∫ tr(BᵀΠΣΠB) + |v|² dt`.
pub fn control_energy(schedule: &RiccatiSchedule, covariances: &[DMatrix<f64>]) -> Result<f64> {
    if covariances.len() != schedule.len() {
        return Err(Error::dims(format!(
            "{} covariances for {} grid times",
            covariances.len(),
            schedule.len()
        )));
    }
    let power: Vec<f64> = (0..schedule.len())
        .map(|k| {
            let gain = schedule.gain(k);
            (&gain * &covariances[k] * gain.transpose()).trace() + schedule.feedforward[k].norm_squared()
        })
        .collect();
    Ok(schedule
        .times
        .windows(2)
        .zip(power.windows(2))
        .map(|(t, p)| 0.5 * (t[1] - t[0]) * (p[0] + p[1]))
        .sum())
}
