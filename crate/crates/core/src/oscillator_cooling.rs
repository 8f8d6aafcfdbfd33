//! Cooling (or heating) a damped harmonic oscillator in a heat bath.
//!
//! State `(x, v)`, drift `A = [[0, 1], [−κ/m, −β]]`, force input through the
//! velocity channel and thermal noise of intensity `σ² = 2kβT/m`. A plan
//! first steers the phase-space Gaussian to the Maxwell–Boltzmann law at the
//! effective temperature `T_eff` by time `t1`, then holds it there with the
//! minimum-power constant gain.
//!
//! The steering solver needs control and noise in the same channel, so the
//! steering phase is solved with input matrix `B1 = (0, σ)ᵀ` and the gain is
//! rescaled to the physical force channel `(0, 1)ᵀ` by a factor `σ`.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::csv_io::write_table_file;
use crate::gaussian_bridge::{control_energy, covariance_path, solve_gauss_bridge, GaussianState, LinearSystem, RiccatiSchedule};
use crate::sde_lab::{FeedbackSchedule, LinearDynamics, Policy};
use crate::stationary_steering::{closed_loop_covariance, optimal_stationary_gain, StationaryGain, StationaryProblem};
use crate::{Error, Result};

/// Terminal covariance tolerance of the steering phase.
pub const STEERING_TOL: f64 = 1e-4;
/// Stationary covariance tolerance of the maintenance phase.
pub const MAINTENANCE_TOL: f64 = 1e-8;

/// Physical constants; the noise intensity is always derived from them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OscillatorModel {
    mass: f64,
    damping: f64,
    boltzmann: f64,
    temperature: f64,
    spring: f64,
}

impl OscillatorModel {
    pub fn new(mass: f64, damping: f64, boltzmann: f64, temperature: f64, spring: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(mass) || !ok(boltzmann) || !ok(temperature) || !ok(spring) || !(damping >= 0.0 && damping.is_finite()) {
            return Err(Error::domain(format!(
                "need m, k, T, κ > 0 and β ≥ 0 (got m={mass}, β={damping}, k={boltzmann}, T={temperature}, κ={spring})"
            )));
        }
        Ok(Self {
            mass,
            damping,
            boltzmann,
            temperature,
            spring,
        })
    }

    /// All constants equal to one.
    pub fn unit() -> Self {
        Self::new(1.0, 1.0, 1.0, 1.0, 1.0).expect("unit constants are valid")
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }

    pub fn boltzmann(&self) -> f64 {
        self.boltzmann
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn spring(&self) -> f64 {
        self.spring
    }

    /// `σ = √(2kβT/m)`.
    pub fn sigma(&self) -> f64 {
        (2.0 * self.boltzmann * self.damping * self.temperature / self.mass).sqrt()
    }

    pub fn drift_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -self.spring / self.mass, -self.damping])
    }

    pub fn force_channel(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(2, 1, &[0.0, 1.0])
    }

    pub fn noise_channel(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(2, 1, &[0.0, self.sigma()])
    }
}

/// Physical system on a unit horizon (use `with_horizon` to change it).
pub fn oscillator_system(model: &OscillatorModel) -> LinearSystem {
    LinearSystem::new(model.drift_matrix(), model.force_channel(), model.noise_channel(), 1.0)
        .expect("oscillator matrices conform")
}

/// Maxwell–Boltzmann law at `t_eff`: zero mean, covariance `diag(kT/κ, kT/m)`.
pub fn target_state(model: &OscillatorModel, t_eff: f64) -> Result<GaussianState> {
    if !(t_eff > 0.0 && t_eff.is_finite()) {
        return Err(Error::domain(format!("effective temperature must be positive, got {t_eff}")));
    }
    let kt = model.boltzmann * t_eff;
    GaussianState::centered(DMatrix::from_diagonal(&DVector::from_vec(vec![
        kt / model.spring,
        kt / model.mass,
    ])))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveTemperature {
    /// `κ Var(x) / k`.
    pub from_position: f64,
    /// `m Var(v) / k`.
    pub from_velocity: f64,
}

#[derive(Clone, Debug)]
pub struct CoolingPlan {
    pub model: OscillatorModel,
    pub t_eff: f64,
    pub t1: f64,
    pub initial: GaussianState,
    pub target: GaussianState,
    /// System with the steering input matrix `B1`.
    pub steering_system: LinearSystem,
    pub schedule: RiccatiSchedule,
    feedback: Arc<FeedbackSchedule>,
    pub maintenance: StationaryGain,
    /// `‖Σ(t1) − Σ_target‖_∞` of the steering phase.
    pub steering_error: f64,
    /// `‖Σ_stationary − Σ_target‖_∞` under the maintenance gain.
    pub maintenance_error: f64,
}

pub fn cooling_plan(
    model: &OscillatorModel,
    initial: &GaussianState,
    t_eff: f64,
    t1: f64,
    n_grid: usize,
    tol: f64,
) -> Result<CoolingPlan> {
    if initial.dim() != 2 {
        return Err(Error::dims("the oscillator state is (x, v)"));
    }
    let target = target_state(model, t_eff)?;
    let physical = oscillator_system(model);

    // Maintenance first: a cheap feasibility check before the boundary solve.
    let stationary = StationaryProblem::new(
        physical.a.clone(),
        physical.b.clone(),
        physical.b1.clone(),
        target.covariance.clone(),
    )?;
    let maintenance = optimal_stationary_gain(&stationary)?;
    let held = closed_loop_covariance(&physical.a, &physical.b, &physical.b1, &maintenance.k)?;
    let maintenance_error = (&held - &target.covariance).amax();
    if maintenance_error > MAINTENANCE_TOL {
        return Err(Error::domain(format!(
            "maintenance gain holds the covariance only to {maintenance_error:e}"
        )));
    }

    let steering_system = LinearSystem::new(physical.a.clone(), physical.b1.clone(), physical.b1.clone(), t1)?;
    let schedule = solve_gauss_bridge(&steering_system, initial, &target, n_grid, tol)?;
    let steering_error = (schedule.terminal_covariance() - &target.covariance).amax();
    if steering_error > STEERING_TOL {
        return Err(Error::NonConvergence {
            iterations: schedule.newton_iterations,
            last_change: steering_error,
            detail: "steering terminal covariance misses the target; refine the grid".into(),
        });
    }
    Ok(CoolingPlan {
        model: *model,
        t_eff,
        t1,
        initial: initial.clone(),
        target,
        steering_system,
        feedback: Arc::new(FeedbackSchedule::from_riccati(&schedule)),
        schedule,
        maintenance,
        steering_error,
        maintenance_error,
    })
}

impl CoolingPlan {
    /// Force-channel gain at knot `k` of the steering phase.
    pub fn physical_gain(&self, k: usize) -> DMatrix<f64> {
        self.schedule.gain(k) * self.model.sigma()
    }

    pub fn physical_gain_at(&self, t: f64) -> Result<DMatrix<f64>> {
        if t >= self.t1 {
            Ok(self.maintenance.k.clone())
        } else {
            Ok(self.schedule.gain_at(t)? * self.model.sigma())
        }
    }

    /// Force law: steering until `t1`, then maintenance.
    pub fn policy(&self) -> Policy {
        Policy::Phased(vec![
            (0.0, Policy::Scaled(self.model.sigma(), Box::new(Policy::Schedule(self.feedback.clone())))),
            (self.t1, Policy::Constant(self.maintenance.k.clone())),
        ])
    }

    pub fn dynamics(&self) -> LinearDynamics {
        LinearDynamics {
            a: self.model.drift_matrix(),
            b: self.model.force_channel(),
            b1: self.model.noise_channel(),
            policy: self.policy(),
        }
    }

    /// `E ∫₀^{t1} |u|² dt` of the physical force.
    pub fn steering_energy(&self) -> Result<f64> {
        let covs = covariance_path(&self.schedule, &self.steering_system, &self.initial)?;
        let s = self.model.sigma();
        Ok(s * s * control_energy(&self.schedule, &covs)?)
    }

    pub fn effective_temperature(&self) -> Result<EffectiveTemperature> {
        let m = &self.model;
        let held = closed_loop_covariance(&m.drift_matrix(), &m.force_channel(), &m.noise_channel(), &self.maintenance.k)?;
        Ok(EffectiveTemperature {
            from_position: m.spring * held[(0, 0)] / m.boltzmann,
            from_velocity: m.mass * held[(1, 1)] / m.boltzmann,
        })
    }

    /// One row per steering knot and one maintenance row at `t1`:
    /// `phase,t,k_x,k_v,feedforward,cov_xx,cov_xv,cov_vv`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let header: Vec<String> = ["phase", "t", "k_x", "k_v", "feedforward", "cov_xx", "cov_xv", "cov_vv"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let s = self.model.sigma();
        let mut rows: Vec<Vec<f64>> = (0..self.schedule.len())
            .map(|k| {
                let g = self.physical_gain(k);
                let c = &self.schedule.sigma[k];
                vec![
                    0.0,
                    self.schedule.times[k],
                    g[(0, 0)],
                    g[(0, 1)],
                    s * self.schedule.feedforward[k][0],
                    c[(0, 0)],
                    c[(0, 1)],
                    c[(1, 1)],
                ]
            })
            .collect();
        let k = &self.maintenance.k;
        let c = &self.target.covariance;
        rows.push(vec![1.0, self.t1, k[(0, 0)], k[(0, 1)], 0.0, c[(0, 0)], c[(0, 1)], c[(1, 1)]]);
        write_table_file(path, &header, rows)
    }
}
