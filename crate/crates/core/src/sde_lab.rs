//! Euler–Maruyama ensembles for controlled linear systems and the nonlinear
//! oscillator, with Monte-Carlo moments and `k·σ` tubes.
//!
//! Every path draws from its own ChaCha8 stream: the generator is seeded from
//! the run seed and the stream id is the path index, and each step consumes a
//! fixed number of words. Paths are processed in fixed-size chunks whose
//! partial results are combined in chunk order, so an ensemble is a pure
//! function of its inputs and seed regardless of the number of worker threads.
//!
//! Standard normals come from the Box–Muller transform on two 53-bit uniforms
//! in the open interval (0, 1).

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;

use crate::csv_io::write_table_file;
use crate::gaussian_bridge::{GaussianState, RiccatiSchedule};
use crate::{Error, Result};

/// Paths per unit of parallel work; fixed so results do not depend on thread count.
const CHUNK: usize = 256;

/// Largest ensemble for which per-path CSV export is allowed.
pub const MAX_PATHS_CSV: usize = 100;

/// Time-varying feedback `u = −K(t)(x − m(t)) + v(t)` sampled on a uniform
/// grid, with gains precomputed and linear interpolation between knots.
#[derive(Clone, Debug)]
pub struct FeedbackSchedule {
    t0: f64,
    step: f64,
    n_inputs: usize,
    dim: usize,
    /// Row-major `n_inputs × dim` gain per knot.
    gains: Vec<Vec<f64>>,
    mean: Vec<Vec<f64>>,
    feedforward: Vec<Vec<f64>>,
}

impl FeedbackSchedule {
    pub fn from_riccati(s: &RiccatiSchedule) -> Self {
        let gains: Vec<Vec<f64>> = (0..s.len())
            .map(|k| {
                let g = s.gain(k);
                let mut row_major = Vec::with_capacity(g.len());
                for i in 0..g.nrows() {
                    row_major.extend(g.row(i).iter());
                }
                row_major
            })
            .collect();
        Self {
            t0: s.times[0],
            step: (s.horizon() - s.times[0]) / (s.len() - 1) as f64,
            n_inputs: s.b.ncols(),
            dim: s.b.nrows(),
            gains,
            mean: s.mean.iter().map(|v| v.iter().copied().collect()).collect(),
            feedforward: s.feedforward.iter().map(|v| v.iter().copied().collect()).collect(),
        }
    }

    pub fn horizon(&self) -> f64 {
        self.t0 + self.step * (self.gains.len() - 1) as f64
    }

    fn control_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> std::result::Result<(), String> {
        let n = self.gains.len() - 1;
        let tf = self.horizon();
        let slack = 1e-12 * (1.0 + tf.abs());
        if !(t >= self.t0 - slack && t <= tf + slack) {
            return Err(format!("time {t} outside schedule horizon [{}, {tf}]", self.t0));
        }
        if x.len() != self.dim || out.len() != self.n_inputs {
            return Err(format!("schedule expects a {}-dimensional state", self.dim));
        }
        let k = (((t - self.t0) / self.step).floor().max(0.0) as usize).min(n - 1);
        let w = ((t - self.t0 - k as f64 * self.step) / self.step).clamp(0.0, 1.0);
        let (g0, g1) = (&self.gains[k], &self.gains[k + 1]);
        let (m0, m1) = (&self.mean[k], &self.mean[k + 1]);
        for (i, o) in out.iter_mut().enumerate() {
            let mut u = (1.0 - w) * self.feedforward[k][i] + w * self.feedforward[k + 1][i];
            for j in 0..self.dim {
                let gain = (1.0 - w) * g0[i * self.dim + j] + w * g1[i * self.dim + j];
                let m = (1.0 - w) * m0[j] + w * m1[j];
                u -= gain * (x[j] - m);
            }
            *o = u;
        }
        Ok(())
    }
}

/// Feedback law producing the input `u(t, x)`.
#[derive(Clone, Debug)]
pub enum Policy {
    Zero,
    /// `u = −K x`.
    Constant(DMatrix<f64>),
    /// Time-varying law of a finite-horizon schedule.
    Schedule(Arc<FeedbackSchedule>),
    /// Scales the inner policy's output.
    Scaled(f64, Box<Policy>),
    /// Piecewise in time: each policy applies from its start time until the next one's.
    Phased(Vec<(f64, Policy)>),
}

impl Policy {
    pub fn schedule(s: &RiccatiSchedule) -> Self {
        Policy::Schedule(Arc::new(FeedbackSchedule::from_riccati(s)))
    }

    /// Writes `u(t, x)` into `out` (length = number of inputs).
    pub fn control_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> std::result::Result<(), String> {
        match self {
            Policy::Zero => {
                out.fill(0.0);
                Ok(())
            }
            Policy::Constant(k) => {
                if k.ncols() != x.len() || k.nrows() != out.len() {
                    return Err(format!(
                        "gain is {}x{} for {} inputs and a {}-dimensional state",
                        k.nrows(),
                        k.ncols(),
                        out.len(),
                        x.len()
                    ));
                }
                for (i, o) in out.iter_mut().enumerate() {
                    *o = -(0..x.len()).map(|j| k[(i, j)] * x[j]).sum::<f64>();
                }
                Ok(())
            }
            Policy::Schedule(s) => s.control_into(t, x, out),
            Policy::Scaled(c, inner) => {
                inner.control_into(t, x, out)?;
                out.iter_mut().for_each(|u| *u *= *c);
                Ok(())
            }
            Policy::Phased(phases) => {
                let (_, p) = phases
                    .iter()
                    .rev()
                    .find(|(start, _)| t >= *start)
                    .ok_or_else(|| format!("no policy phase covers t = {t}"))?;
                p.control_into(t, x, out)
            }
        }
    }

    pub fn control(&self, t: f64, x: &DVector<f64>, n_inputs: usize) -> std::result::Result<DVector<f64>, String> {
        let mut u = DVector::zeros(n_inputs);
        self.control_into(t, x.as_slice(), u.as_mut_slice())?;
        Ok(u)
    }

    pub fn describe(&self) -> String {
        match self {
            Policy::Zero => "zero".into(),
            Policy::Constant(k) => format!("constant gain {:?}", k.as_slice()),
            Policy::Schedule(s) => format!("riccati schedule on [{}, {}]", s.t0, s.horizon()),
            Policy::Scaled(c, p) => format!("{c} x ({})", p.describe()),
            Policy::Phased(ph) => {
                let parts: Vec<String> = ph
                    .iter()
                    .map(|(t, p)| format!("from t={t}: {}", p.describe()))
                    .collect();
                format!("phased [{}]", parts.join("; "))
            }
        }
    }
}

/// Drift/diffusion specification with additive noise `G dW`.
pub trait Dynamics: Sync {
    fn state_dim(&self) -> usize;

    fn n_inputs(&self) -> usize;

    /// Constant noise matrix `G` (state_dim × noise_dim).
    fn noise(&self) -> &DMatrix<f64>;

    /// Writes the drift into `out` and returns the instantaneous control
    /// power `|u|²`; `u` is scratch space of length [`Dynamics::n_inputs`].
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64], u: &mut [f64]) -> std::result::Result<f64, String>;

    fn describe(&self) -> String;
}

/// `dX = (A X + B u(t, X)) dt + B1 dW`.
pub struct LinearDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub policy: Policy,
}

impl Dynamics for LinearDynamics {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    fn noise(&self) -> &DMatrix<f64> {
        &self.b1
    }

    fn drift(&self, t: f64, x: &[f64], out: &mut [f64], u: &mut [f64]) -> std::result::Result<f64, String> {
        self.policy.control_into(t, x, u)?;
        for (i, o) in out.iter_mut().enumerate() {
            let mut d = 0.0;
            for (j, xj) in x.iter().enumerate() {
                d += self.a[(i, j)] * xj;
            }
            for (j, uj) in u.iter().enumerate() {
                d += self.b[(i, j)] * uj;
            }
            *o = d;
        }
        Ok(u.iter().map(|v| v * v).sum())
    }

    fn describe(&self) -> String {
        format!("linear system, policy: {}", self.policy.describe())
    }
}

/// Damped particle in a potential, state `(x, v)`:
/// `dx = v dt`, `dv = (−β v − V'(x)/m + u) dt + σ dW`.
pub struct OscillatorDynamics {
    pub mass: f64,
    pub beta: f64,
    pub potential_gradient: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub policy: Policy,
    noise: DMatrix<f64>,
}

impl OscillatorDynamics {
    pub fn new(
        mass: f64,
        beta: f64,
        sigma: f64,
        potential_gradient: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        policy: Policy,
    ) -> Result<Self> {
        if !(mass > 0.0) || beta < 0.0 || sigma < 0.0 {
            return Err(Error::domain("need m > 0, β ≥ 0, σ ≥ 0"));
        }
        Ok(Self {
            mass,
            beta,
            potential_gradient,
            policy,
            noise: DMatrix::from_column_slice(2, 1, &[0.0, sigma]),
        })
    }
}

impl Dynamics for OscillatorDynamics {
    fn state_dim(&self) -> usize {
        2
    }

    fn n_inputs(&self) -> usize {
        1
    }

    fn noise(&self) -> &DMatrix<f64> {
        &self.noise
    }

    fn drift(&self, t: f64, x: &[f64], out: &mut [f64], u: &mut [f64]) -> std::result::Result<f64, String> {
        self.policy.control_into(t, x, u)?;
        let f = (self.potential_gradient)(x[0]);
        if !f.is_finite() {
            return Err(format!("potential gradient is {f} at x = {}", x[0]));
        }
        out[0] = x[1];
        out[1] = -self.beta * x[1] - f / self.mass + u[0];
        Ok(u[0] * u[0])
    }

    fn describe(&self) -> String {
        format!(
            "oscillator m={} beta={}, policy: {}",
            self.mass,
            self.beta,
            self.policy.describe()
        )
    }
}

/// Initial law of the ensemble.
#[derive(Clone, Debug)]
pub enum Initial {
    Fixed(DVector<f64>),
    Gaussian(GaussianState),
}

impl Initial {
    fn dim(&self) -> usize {
        match self {
            Initial::Fixed(x) => x.len(),
            Initial::Gaussian(g) => g.dim(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SimConfig {
    pub t_final: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    /// Keep every `record_every`-th knot (must divide `n_steps`).
    pub record_every: usize,
}

impl SimConfig {
    pub fn new(t_final: f64, n_steps: usize, n_paths: usize, seed: u64) -> Self {
        Self {
            t_final,
            n_steps,
            n_paths,
            seed,
            record_every: 1,
        }
    }

    pub fn recording_every(mut self, k: usize) -> Self {
        self.record_every = k;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_paths < 1 || self.n_steps < 1 {
            return Err(Error::domain("need at least one path and one step"));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::domain("final time must be positive"));
        }
        if self.record_every == 0 || self.n_steps % self.record_every != 0 {
            return Err(Error::domain("record_every must divide n_steps"));
        }
        Ok(())
    }

    fn record_times(&self) -> Vec<f64> {
        let h = self.t_final / self.n_steps as f64;
        (0..=self.n_steps)
            .step_by(self.record_every)
            .map(|k| if k == self.n_steps { self.t_final } else { k as f64 * h })
            .collect()
    }
}

/// Keyed per-path normal generator.
struct PathRng {
    rng: ChaCha8Rng,
}

impl PathRng {
    fn new(seed: u64, path: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path as u64);
        Self { rng }
    }

    fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Fills `out` with standard normals, always consuming `2·⌈len/2⌉` words.
    fn normals(&mut self, out: &mut [f64]) {
        for pair in out.chunks_mut(2) {
            let u1 = self.uniform();
            let u2 = self.uniform();
            let r = (-2.0 * u1.ln()).sqrt();
            let (s, c) = (2.0 * PI * u2).sin_cos();
            pair[0] = r * c;
            if pair.len() > 1 {
                pair[1] = r * s;
            }
        }
    }
}

/// Runs one path, calling `record(slot, state)` at each recorded knot.
fn run_path(
    dynamics: &dyn Dynamics,
    initial: &Initial,
    chol: Option<&DMatrix<f64>>,
    cfg: &SimConfig,
    path: usize,
    mut record: impl FnMut(usize, &[f64]),
) -> Result<f64> {
    let n = dynamics.state_dim();
    let g = dynamics.noise();
    let d = g.ncols();
    let h = cfg.t_final / cfg.n_steps as f64;
    let sqrt_h = h.sqrt();
    let mut rng = PathRng::new(cfg.seed, path);

    let mut x: Vec<f64> = match (initial, chol) {
        (Initial::Fixed(x0), _) => x0.iter().copied().collect(),
        (Initial::Gaussian(s), Some(l)) => {
            let mut z = DVector::zeros(n);
            rng.normals(z.as_mut_slice());
            (&s.mean + l * z).iter().copied().collect()
        }
        (Initial::Gaussian(_), None) => unreachable!("cholesky factor computed for Gaussian start"),
    };
    let mut drift = vec![0.0; n];
    let mut dw = vec![0.0; d];
    let mut u = vec![0.0; dynamics.n_inputs()];
    let mut energy = 0.0;
    record(0, &x);
    for step in 0..cfg.n_steps {
        let t = step as f64 * h;
        let power = dynamics.drift(t, &x, &mut drift, &mut u).map_err(|message| Error::Policy {
            path,
            step,
            time: t,
            message,
        })?;
        energy += power * h;
        rng.normals(&mut dw);
        for (i, xi) in x.iter_mut().enumerate() {
            let mut noise = 0.0;
            for (j, w) in dw.iter().enumerate() {
                noise += g[(i, j)] * w;
            }
            *xi += drift[i] * h + noise * sqrt_h;
        }
        if (step + 1) % cfg.record_every == 0 {
            record((step + 1) / cfg.record_every, &x);
        }
    }
    Ok(energy)
}

fn prepare(dynamics: &dyn Dynamics, initial: &Initial, cfg: &SimConfig) -> Result<Option<DMatrix<f64>>> {
    cfg.validate()?;
    if initial.dim() != dynamics.state_dim() {
        return Err(Error::dims(format!(
            "initial state has dimension {}, dynamics {}",
            initial.dim(),
            dynamics.state_dim()
        )));
    }
    if dynamics.noise().nrows() != dynamics.state_dim() {
        return Err(Error::dims("noise matrix rows must match the state dimension"));
    }
    Ok(match initial {
        Initial::Fixed(_) => None,
        Initial::Gaussian(s) => Some(
            s.covariance
                .clone()
                .cholesky()
                .ok_or_else(|| Error::domain("initial covariance is not positive definite"))?
                .l(),
        ),
    })
}

/// Stored sample paths, laid out path-major: `[path][knot][coordinate]`.
#[derive(Clone, Debug)]
pub struct PathEnsemble {
    pub times: Vec<f64>,
    pub dim: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub policy: String,
    pub data: Vec<f64>,
    /// `∫ |u|² dt` along each path (left-point rule).
    pub control_energy: Vec<f64>,
}

impl PathEnsemble {
    pub fn n_knots(&self) -> usize {
        self.times.len()
    }

    pub fn state(&self, path: usize, knot: usize) -> &[f64] {
        let start = (path * self.n_knots() + knot) * self.dim;
        &self.data[start..start + self.dim]
    }

    /// Long-format CSV: `path,t,x_1..x_n`.
    pub fn write_paths_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        if self.n_paths > MAX_PATHS_CSV {
            return Err(Error::domain(format!(
                "per-path export is limited to {MAX_PATHS_CSV} paths, ensemble has {}",
                self.n_paths
            )));
        }
        let mut header = vec!["path".to_string(), "t".to_string()];
        header.extend((1..=self.dim).map(|i| format!("x_{i}")));
        let rows = (0..self.n_paths).flat_map(|p| {
            (0..self.n_knots()).map(move |k| {
                let mut row = vec![p as f64, self.times[k]];
                row.extend_from_slice(self.state(p, k));
                row
            })
        });
        write_table_file(path, &header, rows)
    }
}

/// Simulates and stores every path at the recorded knots.
pub fn simulate(dynamics: &dyn Dynamics, initial: &Initial, cfg: &SimConfig) -> Result<PathEnsemble> {
    let chol = prepare(dynamics, initial, cfg)?;
    let times = cfg.record_times();
    let n = dynamics.state_dim();
    let per_path = times.len() * n;
    let mut data = vec![0.0; per_path * cfg.n_paths];
    let mut energy = vec![0.0; cfg.n_paths];

    let results: Vec<Result<()>> = data
        .par_chunks_mut(per_path * CHUNK)
        .zip(energy.par_chunks_mut(CHUNK))
        .enumerate()
        .map(|(c, (block, en))| {
            for (local, (slot, e)) in block.chunks_mut(per_path).zip(en.iter_mut()).enumerate() {
                let path = c * CHUNK + local;
                *e = run_path(dynamics, initial, chol.as_ref(), cfg, path, |k, x| {
                    slot[k * n..(k + 1) * n].copy_from_slice(x);
                })?;
            }
            Ok(())
        })
        .collect();
    results.into_iter().collect::<Result<Vec<()>>>()?;

    Ok(PathEnsemble {
        times,
        dim: n,
        n_paths: cfg.n_paths,
        seed: cfg.seed,
        policy: dynamics.describe(),
        data,
        control_energy: energy,
    })
}

/// Per-knot sample means and unbiased covariances.
#[derive(Clone, Debug)]
pub struct MomentSeries {
    pub times: Vec<f64>,
    pub n_paths: usize,
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
    pub energy_mean: f64,
    /// Unbiased sample variance of the per-path control energy.
    pub energy_variance: f64,
}

impl MomentSeries {
    /// Standard error of the mean control energy.
    pub fn energy_std_error(&self) -> f64 {
        (self.energy_variance / self.n_paths as f64).sqrt()
    }

    /// Standard error of the sample covariance entry `(i, j)` at `knot`,
    /// `√((σ_ii σ_jj + σ_ij²)/(n−1))` under normality.
    pub fn covariance_std_error(&self, knot: usize, i: usize, j: usize) -> f64 {
        let c = &self.covariances[knot];
        ((c[(i, i)] * c[(j, j)] + c[(i, j)] * c[(i, j)]) / (self.n_paths as f64 - 1.0)).sqrt()
    }
}

/// Running count / mean / scatter for one knot (Chan et al. pairwise update).
#[derive(Clone)]
struct Accumulator {
    count: f64,
    mean: DVector<f64>,
    scatter: DMatrix<f64>,
}

impl Accumulator {
    fn new(n: usize) -> Self {
        Self {
            count: 0.0,
            mean: DVector::zeros(n),
            scatter: DMatrix::zeros(n, n),
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1.0;
        let n = x.len();
        for i in 0..n {
            self.mean[i] += (x[i] - self.mean[i]) / self.count;
        }
        if self.count == 1.0 {
            return;
        }
        // (x − old mean) = (x − new mean)·c/(c − 1)
        let factor = self.count / (self.count - 1.0);
        for j in 0..n {
            let dj = x[j] - self.mean[j];
            for i in 0..n {
                self.scatter[(i, j)] += (x[i] - self.mean[i]) * factor * dj;
            }
        }
    }

    fn merge(&mut self, other: &Accumulator) {
        if other.count == 0.0 {
            return;
        }
        let total = self.count + other.count;
        let delta = &other.mean - &self.mean;
        self.scatter += &other.scatter + &delta * delta.transpose() * (self.count * other.count / total);
        self.mean += delta * (other.count / total);
        self.count = total;
    }

    fn covariance(&self) -> DMatrix<f64> {
        let c = &self.scatter / (self.count - 1.0);
        (&c + c.transpose()) * 0.5
    }
}

fn finish(knots: Vec<Accumulator>, energy: Accumulator, times: Vec<f64>, n_paths: usize) -> MomentSeries {
    MomentSeries {
        times,
        n_paths,
        means: knots.iter().map(|a| a.mean.clone()).collect(),
        covariances: knots.iter().map(Accumulator::covariance).collect(),
        energy_mean: energy.mean[0],
        energy_variance: energy.covariance()[(0, 0)],
    }
}

/// Streams paths through per-knot accumulators without storing them.
pub fn simulate_moments(dynamics: &dyn Dynamics, initial: &Initial, cfg: &SimConfig) -> Result<MomentSeries> {
    if cfg.n_paths < 2 {
        return Err(Error::domain("moments need at least two paths"));
    }
    let chol = prepare(dynamics, initial, cfg)?;
    let times = cfg.record_times();
    let n = dynamics.state_dim();
    let n_chunks = cfg.n_paths.div_ceil(CHUNK);

    let partials: Vec<Result<(Vec<Accumulator>, Accumulator)>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut knots = vec![Accumulator::new(n); times.len()];
            let mut energy = Accumulator::new(1);
            for path in c * CHUNK..((c + 1) * CHUNK).min(cfg.n_paths) {
                let e = run_path(dynamics, initial, chol.as_ref(), cfg, path, |k, x| knots[k].push(x))?;
                energy.push(&[e]);
            }
            Ok((knots, energy))
        })
        .collect();

    let mut knots = vec![Accumulator::new(n); times.len()];
    let mut energy = Accumulator::new(1);
    for part in partials {
        let (k, e) = part?;
        for (acc, other) in knots.iter_mut().zip(&k) {
            acc.merge(other);
        }
        energy.merge(&e);
    }
    Ok(finish(knots, energy, times, cfg.n_paths))
}

pub fn empirical_moments(ens: &PathEnsemble) -> Result<MomentSeries> {
    if ens.n_paths < 2 {
        return Err(Error::domain("moments need at least two paths"));
    }
    let mut knots = vec![Accumulator::new(ens.dim); ens.n_knots()];
    let mut energy = Accumulator::new(1);
    for p in 0..ens.n_paths {
        for (k, acc) in knots.iter_mut().enumerate() {
            acc.push(ens.state(p, k));
        }
        energy.push(&[ens.control_energy[p]]);
    }
    Ok(finish(knots, energy, ens.times.clone(), ens.n_paths))
}

/// Componentwise `mean ± k·std` band per knot.
#[derive(Clone, Debug)]
pub struct TubeStats {
    pub k_sigma: f64,
    pub times: Vec<f64>,
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
    pub lo: Vec<Vec<f64>>,
    pub hi: Vec<Vec<f64>>,
}

impl TubeStats {
    pub fn from_moments(m: &MomentSeries, k_sigma: f64) -> Result<Self> {
        if !(k_sigma > 0.0) {
            return Err(Error::domain("k must be positive"));
        }
        let mean: Vec<Vec<f64>> = m.means.iter().map(|v| v.iter().copied().collect()).collect();
        let std: Vec<Vec<f64>> = m
            .covariances
            .iter()
            .map(|c| c.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect())
            .collect();
        let band = |sign: f64| -> Vec<Vec<f64>> {
            mean.iter()
                .zip(&std)
                .map(|(m, s)| m.iter().zip(s).map(|(m, s)| m + sign * k_sigma * s).collect())
                .collect()
        };
        Ok(Self {
            k_sigma,
            times: m.times.clone(),
            lo: band(-1.0),
            hi: band(1.0),
            mean,
            std,
        })
    }

    /// Half-widths `k·std` at the last knot.
    pub fn terminal_half_widths(&self) -> Vec<f64> {
        self.std
            .last()
            .map(|s| s.iter().map(|v| self.k_sigma * v).collect())
            .unwrap_or_default()
    }

    /// `t, mean_1..n, std_1..n, lo_1..n, hi_1..n`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let n = self.mean.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        for prefix in ["mean", "std", "lo", "hi"] {
            header.extend((1..=n).map(|i| format!("{prefix}_{i}")));
        }
        let rows = (0..self.times.len()).map(|k| {
            let mut row = vec![self.times[k]];
            row.extend(&self.mean[k]);
            row.extend(&self.std[k]);
            row.extend(&self.lo[k]);
            row.extend(&self.hi[k]);
            row
        });
        write_table_file(path, &header, rows)
    }
}

pub fn tube_stats(ens: &PathEnsemble, k_sigma: f64) -> Result<TubeStats> {
    TubeStats::from_moments(&empirical_moments(ens)?, k_sigma)
}
