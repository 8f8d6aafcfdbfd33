//! WebAssembly bindings for the static page in `www/`.
//!
//! Each exported function is a thin wrapper over a plain Rust function of the
//! same name with a `compute_` prefix, so the numerics can be tested natively.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use wasm_bindgen::prelude::*;

use sbridge_core::cone_metric::{birkhoff_ratio, PositiveMatrix};
use sbridge_core::discrete_bridge::{interpolate, solve, DiscreteBridgeProblem};
use sbridge_core::markov_prior::{build_heat_kernel, Grid1D, Marginal, TransitionKernel};
use sbridge_core::omt_reference::{displacement_interpolation, Gaussian1D, Measure1D};
use sbridge_core::oscillator_cooling::{cooling_plan, target_state, OscillatorModel};
use sbridge_core::sde_lab::{simulate, Initial, SimConfig};

const STEPS: usize = 8;
const ENDPOINT_STD: f64 = 0.5;

/// Mid-time densities of the entropic and displacement interpolations.
#[wasm_bindgen(getter_with_clone)]
#[derive(Clone, Debug)]
pub struct Interpolation {
    pub x: Vec<f64>,
    pub entropic: Vec<f64>,
    pub displacement: Vec<f64>,
    pub cycles: usize,
}

/// Endpoints N(-d/2, 0.25) and N(d/2, 0.25), Brownian prior of diffusivity `epsilon`.
pub fn compute_interpolation(epsilon: f64, separation: f64) -> Result<Interpolation, String> {
    if !(epsilon > 0.0 && epsilon <= 4.0) || !(separation >= 0.0 && separation <= 4.0) {
        return Err("epsilon must lie in (0, 4] and separation in [0, 4]".into());
    }
    let half = separation / 2.0 + 4.0 * ENDPOINT_STD + 3.0 * (epsilon / STEPS as f64).sqrt();
    let grid = Grid1D::new(-half, half, 241).map_err(|e| e.to_string())?;
    let p0 = Marginal::gaussian(&grid, -separation / 2.0, ENDPOINT_STD).map_err(|e| e.to_string())?;
    let p1 = Marginal::gaussian(&grid, separation / 2.0, ENDPOINT_STD).map_err(|e| e.to_string())?;
    let step = build_heat_kernel(&grid, epsilon, 1.0 / STEPS as f64).map_err(|e| e.to_string())?;
    let problem = DiscreteBridgeProblem::from_chain(vec![step; STEPS], p0, p1).map_err(|e| e.to_string())?;
    let sol = solve(&problem, 1e-10, 100_000).map_err(|e| e.to_string())?;
    let mid = &interpolate(&sol, &problem).map_err(|e| e.to_string())?[STEPS / 2];
    let h = grid.spacing();
    let g = |m: f64| Measure1D::Gaussian(Gaussian1D::new(m, ENDPOINT_STD).expect("positive std"));
    let Measure1D::Gaussian(disp) =
        displacement_interpolation(&g(-separation / 2.0), &g(separation / 2.0), 0.5).map_err(|e| e.to_string())?
    else {
        unreachable!("Gaussian endpoints stay Gaussian")
    };
    let x = grid.points();
    Ok(Interpolation {
        entropic: mid.as_vector().iter().map(|p| p / h).collect(),
        displacement: x.iter().map(|v| disp.density(*v)).collect(),
        x,
        cycles: sol.iterations,
    })
}

#[wasm_bindgen]
pub fn interpolation(epsilon: f64, separation: f64) -> Result<Interpolation, JsValue> {
    compute_interpolation(epsilon, separation).map_err(|e| JsValue::from_str(&e))
}

/// Cooling from the bath temperature to `t_eff` over `[0, 1]`, held until `t = 2`.
#[wasm_bindgen(getter_with_clone)]
#[derive(Clone, Debug)]
pub struct Tube {
    pub times: Vec<f64>,
    /// Predicted 3-sigma half-widths of position and velocity.
    pub half_x: Vec<f64>,
    pub half_v: Vec<f64>,
    /// Sample positions, path-major: `paths[p * times.len() + k]`.
    pub paths_x: Vec<f64>,
    pub n_paths: usize,
}

pub fn compute_tube(t_eff: f64, n_paths: usize, seed: u64) -> Result<Tube, String> {
    if !(t_eff > 0.0 && t_eff <= 4.0) || !(1..=200).contains(&n_paths) {
        return Err("t_eff must lie in (0, 4] and paths in 1..=200".into());
    }
    let model = OscillatorModel::unit();
    let start = target_state(&model, model.temperature()).map_err(|e| e.to_string())?;
    let plan = cooling_plan(&model, &start, t_eff, 1.0, 400, 1e-6).map_err(|e| e.to_string())?;
    let cfg = SimConfig::new(2.0, 800, n_paths, seed).recording_every(4);
    let ens = simulate(&plan.dynamics(), &Initial::Gaussian(start), &cfg).map_err(|e| e.to_string())?;
    let held = &plan.target.covariance;
    let (mut half_x, mut half_v) = (Vec::new(), Vec::new());
    for &t in &ens.times {
        let (vx, vv) = if t < 1.0 {
            let k = ((t * (plan.schedule.len() - 1) as f64).round() as usize).min(plan.schedule.len() - 1);
            (plan.schedule.sigma[k][(0, 0)], plan.schedule.sigma[k][(1, 1)])
        } else {
            (held[(0, 0)], held[(1, 1)])
        };
        half_x.push(3.0 * vx.sqrt());
        half_v.push(3.0 * vv.sqrt());
    }
    let paths_x = (0..n_paths)
        .flat_map(|p| (0..ens.n_knots()).map(move |k| (p, k)))
        .map(|(p, k)| ens.state(p, k)[0])
        .collect();
    Ok(Tube {
        times: ens.times.clone(),
        half_x,
        half_v,
        paths_x,
        n_paths,
    })
}

#[wasm_bindgen]
pub fn tube(t_eff: f64, n_paths: usize, seed: u64) -> Result<Tube, JsValue> {
    compute_tube(t_eff, n_paths, seed).map_err(|e| JsValue::from_str(&e))
}

/// Per-cycle Hilbert-metric contraction of the bridge iteration on a random kernel.
#[wasm_bindgen(getter_with_clone)]
#[derive(Clone, Debug)]
pub struct Contraction {
    pub factors: Vec<f64>,
    pub bound: f64,
    pub changes: Vec<f64>,
}

/// Kernel entries `exp(contrast * u)`, `u` uniform on `[0, 1)`.
pub fn compute_contraction(n: usize, contrast: f64, seed: u64) -> Result<Contraction, String> {
    if !(2..=200).contains(&n) || !(contrast >= 0.0 && contrast <= 20.0) {
        return Err("size must lie in 2..=200 and contrast in [0, 20]".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    let w = DMatrix::from_fn(n, n, |_, _| (contrast * u()).exp());
    let p0 = DVector::from_fn(n, |_, _| 0.1 + u());
    let p1 = DVector::from_fn(n, |_, _| 0.1 + u());
    let err = |e: sbridge_core::Error| e.to_string();
    let prior = TransitionKernel::from_weights(w, 1.0).map_err(err)?;
    let ratio = birkhoff_ratio(&PositiveMatrix::new(prior.matrix().clone()).map_err(err)?).map_err(err)?;
    let problem = DiscreteBridgeProblem::new(
        prior,
        Marginal::from_weights(p0).map_err(err)?,
        Marginal::from_weights(p1).map_err(err)?,
    )
    .map_err(err)?;
    let sol = solve(&problem, 1e-13, 100_000).map_err(err)?;
    Ok(Contraction {
        factors: sol.contraction_factors(1e-12),
        bound: ratio * ratio,
        changes: sol.convergence_log.iter().map(|r| r.hilbert_change).collect(),
    })
}

#[wasm_bindgen]
pub fn contraction(n: usize, contrast: f64, seed: u64) -> Result<Contraction, JsValue> {
    compute_contraction(n, contrast, seed).map_err(|e| JsValue::from_str(&e))
}
