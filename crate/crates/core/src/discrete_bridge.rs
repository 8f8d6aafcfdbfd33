//! Discrete Schrödinger bridges by the four-map Fortet iteration.
//!
//! Given a `T`-step prior `π` and endpoint marginals `p0`, `pT`, the
//! Schrödinger system asks for potentials with
//!
//! ```text
//! φ(0)  = π  φ(T),      φ(0) ⊙ φ̂(0) = p0
//! φ̂(T) = πᵀ φ̂(0),     φ(T) ⊙ φ̂(T) = pT
//! ```
//!
//! One cycle maps `φ̂(0) → φ̂(T) → φ(T) → φ(0) → φ̂(0)_next`. The two linear
//! maps contract the Hilbert metric by the Birkhoff ratio `λ` of `π` each and
//! the componentwise divisions are isometries, so successive changes shrink
//! by at least `λ²` per cycle.
//!
//! Potentials live in log space inside [`BridgeSolution`]; kernels with
//! entries far below the float range are iterated entirely in log space.

use nalgebra::{DMatrix, DVector};

use crate::cone_metric::hilbert_distance_log;
use crate::markov_prior::{compose, Marginal, TransitionKernel};
use crate::{Error, Result};

/// Kernels whose smallest positive entry is below this are iterated in log space.
pub const LOG_DOMAIN_THRESHOLD: f64 = 1e-100;

const STEP_CONSISTENCY_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct DiscreteBridgeProblem {
    prior: TransitionKernel,
    p0: Marginal,
    p_t: Marginal,
    step_kernels: Option<Vec<TransitionKernel>>,
}

impl DiscreteBridgeProblem {
    /// Checks conformity and that every supported state can send or receive mass.
    pub fn new(prior: TransitionKernel, p0: Marginal, p_t: Marginal) -> Result<Self> {
        let n = prior.n_states();
        if p0.len() != n || p_t.len() != n {
            return Err(Error::dims(format!(
                "prior has {n} states, marginals have {} and {}",
                p0.len(),
                p_t.len()
            )));
        }
        let pi = prior.matrix();
        let s0 = p0.support();
        let st = p_t.support();
        if let Some(i) = s0.iter().find(|&&i| st.iter().all(|&j| pi[(i, j)] == 0.0)) {
            return Err(Error::Infeasible(format!(
                "initial state {i} carries mass but reaches no state in the terminal support"
            )));
        }
        if let Some(j) = st.iter().find(|&&j| s0.iter().all(|&i| pi[(i, j)] == 0.0)) {
            return Err(Error::Infeasible(format!(
                "terminal state {j} carries mass but is unreachable from the initial support"
            )));
        }
        Ok(Self {
            prior,
            p0,
            p_t,
            step_kernels: None,
        })
    }

    /// Builds the problem from one-step kernels; the prior is their product.
    pub fn from_chain(steps: Vec<TransitionKernel>, p0: Marginal, p_t: Marginal) -> Result<Self> {
        let prior = compose(&steps)?;
        let mut problem = Self::new(prior, p0, p_t)?;
        problem.step_kernels = Some(steps);
        Ok(problem)
    }

    pub fn with_step_kernels(mut self, steps: Vec<TransitionKernel>) -> Self {
        self.step_kernels = Some(steps);
        self
    }

    pub fn prior(&self) -> &TransitionKernel {
        &self.prior
    }

    pub fn p0(&self) -> &Marginal {
        &self.p0
    }

    pub fn p_t(&self) -> &Marginal {
        &self.p_t
    }

    pub fn step_kernels(&self) -> Option<&[TransitionKernel]> {
        self.step_kernels.as_deref()
    }

    pub fn n_states(&self) -> usize {
        self.prior.n_states()
    }
}

/// Intermediate potentials of one Fortet cycle (linear scale).
#[derive(Clone, Debug)]
pub struct CycleOutput {
    pub phihat_t: DVector<f64>,
    pub phi_t: DVector<f64>,
    pub phi0: DVector<f64>,
    pub phihat0_next: DVector<f64>,
}

/// One pass through the four maps, starting from `φ̂(0)`.
///
/// Entries outside the support of a marginal are pinned to zero.
pub fn fortet_cycle(phihat0: &DVector<f64>, problem: &DiscreteBridgeProblem) -> Result<CycleOutput> {
    let n = problem.n_states();
    if phihat0.len() != n {
        return Err(Error::dims(format!("potential has {} entries, expected {n}", phihat0.len())));
    }
    let p0 = problem.p0.as_vector();
    let pt = problem.p_t.as_vector();
    if phihat0
        .iter()
        .zip(p0.iter())
        .any(|(h, p)| !h.is_finite() || *h < 0.0 || (*p > 0.0 && *h <= 0.0))
    {
        return Err(Error::domain(
            "starting potential must be finite, nonnegative and positive on the initial support",
        ));
    }
    let pi = problem.prior.matrix();
    let start = phihat0.zip_map(p0, |h, p| if p > 0.0 { h } else { 0.0 });
    let phihat_t = pi.tr_mul(&start);
    let phi_t = divide_on_support(pt, &phihat_t, "terminal")?;
    let phi0 = pi * &phi_t;
    let phihat0_next = divide_on_support(p0, &phi0, "initial")?;
    Ok(CycleOutput {
        phihat_t,
        phi_t,
        phi0,
        phihat0_next,
    })
}

fn divide_on_support(p: &DVector<f64>, d: &DVector<f64>, side: &str) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(p.len());
    for i in 0..p.len() {
        if p[i] > 0.0 {
            if !(d[i] > 0.0 && d[i].is_finite()) {
                return Err(Error::Infeasible(format!(
                    "{side} state {i} has mass {} but its propagated potential is {}",
                    p[i], d[i]
                )));
            }
            out[i] = p[i] / d[i];
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    /// Log space when the prior has entries below [`LOG_DOMAIN_THRESHOLD`]
    /// or the linear iteration leaves the float range.
    Auto,
    Linear,
    Log,
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_cycles: usize,
    pub domain: Domain,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_cycles: 100_000,
            domain: Domain::Auto,
        }
    }
}

/// One line of the convergence log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleRecord {
    pub cycle: usize,
    /// `d_H(φ̂(0)_next, φ̂(0))`.
    pub hilbert_change: f64,
    /// `max |φ̂(0) ⊙ φ(0) − p0|` for the iterate entering the cycle.
    pub marginal_residual: f64,
}

/// Converged potentials, stored as natural logs (`-inf` off support).
///
/// Gauge: `Σ φ̂(0) = 1`.
#[derive(Clone, Debug)]
pub struct BridgeSolution {
    pub log_phi0: DVector<f64>,
    pub log_phi_t: DVector<f64>,
    pub log_phihat0: DVector<f64>,
    pub log_phihat_t: DVector<f64>,
    pub iterations: usize,
    pub convergence_log: Vec<CycleRecord>,
    pub domain: Domain,
    pub tol: f64,
}

impl BridgeSolution {
    pub fn phi0(&self) -> DVector<f64> {
        self.log_phi0.map(f64::exp)
    }

    pub fn phi_t(&self) -> DVector<f64> {
        self.log_phi_t.map(f64::exp)
    }

    pub fn phihat0(&self) -> DVector<f64> {
        self.log_phihat0.map(f64::exp)
    }

    pub fn phihat_t(&self) -> DVector<f64> {
        self.log_phihat_t.map(f64::exp)
    }

    /// `max |φ(0) ⊙ φ̂(0) − p0|` and `max |φ(T) ⊙ φ̂(T) − pT|`.
    pub fn endpoint_residuals(&self, problem: &DiscreteBridgeProblem) -> (f64, f64) {
        let r = |a: &DVector<f64>, b: &DVector<f64>, p: &DVector<f64>| {
            (0..p.len())
                .map(|i| ((a[i] + b[i]).exp() - p[i]).abs())
                .fold(0.0, f64::max)
        };
        (
            r(&self.log_phi0, &self.log_phihat0, problem.p0.as_vector()),
            r(&self.log_phi_t, &self.log_phihat_t, problem.p_t.as_vector()),
        )
    }

    /// Observed per-cycle contraction factors `d_{k+1} / d_k`, skipping cycles
    /// whose previous change is at or below `floor`.
    pub fn contraction_factors(&self, floor: f64) -> Vec<f64> {
        self.convergence_log
            .windows(2)
            .filter(|w| w[0].hilbert_change > floor)
            .map(|w| w[1].hilbert_change / w[0].hilbert_change)
            .collect()
    }

    pub fn last_change(&self) -> f64 {
        self.convergence_log
            .last()
            .map_or(0.0, |r| r.hilbert_change)
    }
}

/// Iterates until `d_H(φ̂(0)_next, φ̂(0)) < tol`.
pub fn solve(problem: &DiscreteBridgeProblem, tol: f64, max_cycles: usize) -> Result<BridgeSolution> {
    solve_with(
        problem,
        &SolverOptions {
            tol,
            max_cycles,
            domain: Domain::Auto,
        },
        None,
    )
}

/// Like [`solve`], with a choice of domain and an optional starting `φ̂(0)`
/// (defaults to `p0`).
pub fn solve_with(
    problem: &DiscreteBridgeProblem,
    opts: &SolverOptions,
    init: Option<&DVector<f64>>,
) -> Result<BridgeSolution> {
    if !(opts.tol > 0.0) {
        return Err(Error::domain("tolerance must be positive"));
    }
    if opts.max_cycles == 0 {
        return Err(Error::domain("max_cycles must be at least 1"));
    }
    let p0 = problem.p0.as_vector();
    let start = match init {
        Some(v) => {
            if v.len() != p0.len() {
                return Err(Error::dims("initial potential has the wrong length"));
            }
            if v
                .iter()
                .zip(p0.iter())
                .any(|(h, p)| !h.is_finite() || *h < 0.0 || (*p > 0.0 && *h <= 0.0))
            {
                return Err(Error::domain("initial potential must be positive on the support of p0"));
            }
            v.clone()
        }
        None => p0.clone(),
    };
    let log_start = start.zip_map(p0, |h, p| if p > 0.0 { h.ln() } else { f64::NEG_INFINITY });

    match opts.domain {
        Domain::Linear => solve_linear(problem, opts, &start),
        Domain::Log => LogIteration::new(problem).solve(opts, log_start),
        Domain::Auto => {
            let tiny = problem
                .prior
                .min_positive()
                .is_none_or(|m| m < LOG_DOMAIN_THRESHOLD);
            if tiny {
                return LogIteration::new(problem).solve(opts, log_start);
            }
            match solve_linear(problem, opts, &start) {
                // Linear iteration left the float range: redo it in log space.
                Err(Error::Infeasible(_)) | Err(Error::Domain(_)) => {
                    LogIteration::new(problem).solve(opts, log_start)
                }
                other => other,
            }
        }
    }
}

fn ln_masked(v: &DVector<f64>, p: &DVector<f64>) -> Vec<f64> {
    v.iter()
        .zip(p.iter())
        .map(|(x, p)| if *p > 0.0 { x.ln() } else { f64::NEG_INFINITY })
        .collect()
}

fn normalize_sum(v: &mut DVector<f64>) -> Result<()> {
    let s = v.sum();
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::domain("potential left the float range"));
    }
    *v /= s;
    Ok(())
}

fn solve_linear(
    problem: &DiscreteBridgeProblem,
    opts: &SolverOptions,
    start: &DVector<f64>,
) -> Result<BridgeSolution> {
    let p0 = problem.p0.as_vector();
    let pt = problem.p_t.as_vector();
    let mut current = start.zip_map(p0, |h, p| if p > 0.0 { h } else { 0.0 });
    normalize_sum(&mut current)?;
    let mut log = Vec::new();
    let mut converged = false;
    for cycle in 1..=opts.max_cycles {
        let out = fortet_cycle(&current, problem)?;
        let residual = (0..p0.len())
            .map(|i| (current[i] * out.phi0[i] - p0[i]).abs())
            .fold(0.0, f64::max);
        let mut next = out.phihat0_next;
        normalize_sum(&mut next)?;
        let change = hilbert_distance_log(&ln_masked(&next, p0), &ln_masked(&current, p0));
        if !change.is_finite() {
            return Err(Error::domain("Hilbert change is not finite"));
        }
        log.push(CycleRecord {
            cycle,
            hilbert_change: change,
            marginal_residual: residual,
        });
        current = next;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(non_convergence(&log, opts));
    }
    let pi = problem.prior.matrix();
    let phihat_t = pi.tr_mul(&current);
    let phi_t = divide_on_support(pt, &phihat_t, "terminal")?;
    let phi0 = pi * &phi_t;
    if phi0.iter().zip(p0.iter()).any(|(f, p)| *p > 0.0 && !(*f > 0.0)) {
        return Err(Error::domain("potential underflow in final sweep"));
    }
    Ok(BridgeSolution {
        log_phi0: phi0.map(f64::ln),
        log_phi_t: phi_t.map(f64::ln),
        log_phihat0: current.map(f64::ln),
        log_phihat_t: phihat_t.map(f64::ln),
        iterations: log.len(),
        convergence_log: log,
        domain: Domain::Linear,
        tol: opts.tol,
    })
}

fn non_convergence(log: &[CycleRecord], opts: &SolverOptions) -> Error {
    let last = log.last().map_or(f64::NAN, |r| r.hilbert_change);
    Error::NonConvergence {
        iterations: log.len(),
        last_change: last,
        detail: format!(
            "Fortet iteration did not reach Hilbert change {:e} within {} cycles",
            opts.tol, opts.max_cycles
        ),
    }
}

/// `log Σ_k exp(a_k + b_k)`, `-inf` when every term is `-inf`.
fn log_dot(a: impl Iterator<Item = f64> + Clone, b: &[f64]) -> f64 {
    let m = a
        .clone()
        .zip(b)
        .map(|(x, y)| x + y)
        .fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let s: f64 = a.zip(b).map(|(x, y)| (x + y - m).exp()).sum();
    m + s.ln()
}

/// `out_j = log Σ_i exp(L_ij + v_i)`, the log of `Mᵀ exp(v)`.
fn log_tr_mul(log_m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..log_m.ncols())
        .map(|j| log_dot(log_m.column(j).iter().copied(), v))
        .collect()
}

fn log_normalize(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return;
    }
    let lse = m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    for x in v.iter_mut() {
        *x -= lse;
    }
}

struct LogIteration<'a> {
    problem: &'a DiscreteBridgeProblem,
    log_pi: DMatrix<f64>,
    // transpose, so that both products walk contiguous columns
    log_pi_t: DMatrix<f64>,
    log_p0: Vec<f64>,
    log_pt: Vec<f64>,
}

impl<'a> LogIteration<'a> {
    fn new(problem: &'a DiscreteBridgeProblem) -> Self {
        let log_pi = problem.prior.log_matrix();
        let log_pi_t = log_pi.transpose();
        Self {
            problem,
            log_pi,
            log_pi_t,
            log_p0: problem.p0.as_vector().iter().map(|p| p.ln()).collect(),
            log_pt: problem.p_t.as_vector().iter().map(|p| p.ln()).collect(),
        }
    }

    fn divide(num: &[f64], den: &[f64], side: &str) -> Result<Vec<f64>> {
        num.iter()
            .zip(den)
            .enumerate()
            .map(|(i, (n, d))| {
                if *n == f64::NEG_INFINITY {
                    Ok(f64::NEG_INFINITY)
                } else if d.is_finite() {
                    Ok(n - d)
                } else {
                    Err(Error::Infeasible(format!(
                        "{side} state {i} carries mass but its propagated potential vanishes"
                    )))
                }
            })
            .collect()
    }

    /// Returns `(φ̂(T), φ(T), φ(0), φ̂(0)_next)` in logs.
    fn cycle(&self, log_phihat0: &[f64]) -> Result<[Vec<f64>; 4]> {
        let lht = log_tr_mul(&self.log_pi, log_phihat0);
        let lft = Self::divide(&self.log_pt, &lht, "terminal")?;
        let lf0 = log_tr_mul(&self.log_pi_t, &lft);
        let lh0 = Self::divide(&self.log_p0, &lf0, "initial")?;
        Ok([lht, lft, lf0, lh0])
    }

    fn solve(&self, opts: &SolverOptions, start: DVector<f64>) -> Result<BridgeSolution> {
        let mut current: Vec<f64> = start.iter().copied().collect();
        log_normalize(&mut current);
        let p0 = self.problem.p0.as_vector();
        let mut log = Vec::new();
        let mut converged = false;
        for cycle in 1..=opts.max_cycles {
            let [_, _, lf0, mut next] = self.cycle(&current)?;
            let residual = (0..p0.len())
                .map(|i| ((current[i] + lf0[i]).exp() - p0[i]).abs())
                .fold(0.0, f64::max);
            log_normalize(&mut next);
            let change = hilbert_distance_log(&next, &current);
            log.push(CycleRecord {
                cycle,
                hilbert_change: change,
                marginal_residual: residual,
            });
            current = next;
            if change < opts.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(non_convergence(&log, opts));
        }
        let [lht, lft, lf0, _] = self.cycle(&current)?;
        Ok(BridgeSolution {
            log_phi0: DVector::from_vec(lf0),
            log_phi_t: DVector::from_vec(lft),
            log_phihat0: DVector::from_vec(current),
            log_phihat_t: DVector::from_vec(lht),
            iterations: log.len(),
            convergence_log: log,
            domain: Domain::Log,
            tol: opts.tol,
        })
    }
}

fn check_solution(sol: &BridgeSolution, problem: &DiscreteBridgeProblem) -> Result<()> {
    let n = problem.n_states();
    if [&sol.log_phi0, &sol.log_phi_t, &sol.log_phihat0, &sol.log_phihat_t]
        .iter()
        .any(|v| v.len() != n)
    {
        return Err(Error::dims("solution does not belong to this problem"));
    }
    if sol.log_phihat0.iter().any(|v| v.is_nan()) || sol.log_phi_t.iter().any(|v| v.is_nan()) {
        return Err(Error::domain("solution potentials contain NaN"));
    }
    Ok(())
}

/// Endpoint coupling `q_ij = φ̂(0)_i π_ij φ(T)_j`.
pub fn bridge_coupling(sol: &BridgeSolution, problem: &DiscreteBridgeProblem) -> Result<DMatrix<f64>> {
    check_solution(sol, problem)?;
    let pi = problem.prior.matrix();
    let n = problem.n_states();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if pi[(i, j)] == 0.0 {
            0.0
        } else {
            (sol.log_phihat0[i] + pi[(i, j)].ln() + sol.log_phi_t[j]).exp()
        }
    }))
}

/// One-time marginals `ρ(t_k) ∝ φ(t_k) ⊙ φ̂(t_k)` at every step of the chain.
///
/// The returned sequence has one entry per knot, endpoints included; the
/// endpoints are the problem's own marginals.
pub fn interpolate(sol: &BridgeSolution, problem: &DiscreteBridgeProblem) -> Result<Vec<Marginal>> {
    check_solution(sol, problem)?;
    let steps = problem
        .step_kernels()
        .ok_or_else(|| Error::domain("interpolation needs the one-step kernels of the prior"))?;
    let composed = compose(steps)?;
    let mismatch = (composed.matrix() - problem.prior.matrix()).amax();
    if mismatch > STEP_CONSISTENCY_TOL {
        return Err(Error::domain(format!(
            "step kernels compose to a kernel differing from the prior by {mismatch:e}"
        )));
    }
    let n_steps = steps.len();
    let logs: Vec<DMatrix<f64>> = steps.iter().map(TransitionKernel::log_matrix).collect();

    // φ backwards from T, φ̂ forwards from 0.
    let mut phi = vec![Vec::new(); n_steps + 1];
    phi[n_steps] = sol.log_phi_t.iter().copied().collect();
    for k in (0..n_steps).rev() {
        let lt = logs[k].transpose();
        phi[k] = log_tr_mul(&lt, &phi[k + 1]);
    }
    let mut phihat = vec![Vec::new(); n_steps + 1];
    phihat[0] = sol.log_phihat0.iter().copied().collect();
    for k in 1..=n_steps {
        phihat[k] = log_tr_mul(&logs[k - 1], &phihat[k - 1]);
    }

    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(problem.p0.clone());
    for k in 1..n_steps {
        let mut l: Vec<f64> = phi[k].iter().zip(&phihat[k]).map(|(a, b)| a + b).collect();
        log_normalize(&mut l);
        out.push(Marginal::from_weights(DVector::from_iterator(
            l.len(),
            l.iter().map(|v| v.exp()),
        ))?);
    }
    if n_steps >= 1 {
        out.push(problem.p_t.clone());
    }
    Ok(out)
}

/// Relative entropy of the bridge coupling with respect to the prior coupling
/// `p0_i π_ij`, with `0·log 0 = 0`.
pub fn relative_entropy(sol: &BridgeSolution, problem: &DiscreteBridgeProblem) -> Result<f64> {
    check_solution(sol, problem)?;
    let pi = problem.prior.matrix();
    let p0 = problem.p0.as_vector();
    let n = problem.n_states();
    let mut kl = 0.0;
    for i in 0..n {
        if p0[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            // q_ij = 0 wherever π_ij = 0 by construction of the coupling.
            if pi[(i, j)] == 0.0 {
                continue;
            }
            let log_ratio = sol.log_phihat0[i] + sol.log_phi_t[j] - p0[i].ln();
            let q = (sol.log_phihat0[i] + pi[(i, j)].ln() + sol.log_phi_t[j]).exp();
            if q > 0.0 {
                kl += q * log_ratio;
            }
        }
    }
    // Roundoff can leave a tiny negative value for the prior itself.
    Ok(kl.max(0.0))
}
