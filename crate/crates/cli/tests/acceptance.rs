//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Criteria 9 and 10 drive the real `sbridge` binary on the shipped configs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde_json::Value;

use sbridge_core::cone_metric::{birkhoff_ratio, PositiveMatrix};
use sbridge_core::discrete_bridge::{bridge_coupling, solve, DiscreteBridgeProblem};
use sbridge_core::gaussian_bridge::{control_energy, covariance_path, solve_gauss_bridge, GaussianState, LinearSystem};
use sbridge_core::linalg::solve_lyapunov;
use sbridge_core::markov_prior::{build_heat_kernel, propagate, Grid1D, Marginal, TransitionKernel};
use sbridge_core::omt_reference::{
    hj_residual, monotone_map_1d, wasserstein2, zero_noise_study, DisplacementPath, Gaussian1D, GaussianPath,
    Measure1D, Quantile1D, StudyOptions,
};
use sbridge_core::oscillator_cooling::{cooling_plan, target_state, OscillatorModel};
use sbridge_core::sde_lab::{simulate_moments, Initial, LinearDynamics, Policy, SimConfig};
use sbridge_core::stationary_steering::{check_feasibility, optimal_stationary_gain, StationaryProblem};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64())
    })
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * ((rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64)
}

fn random_positive(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| uniform(rng, 0.05, 1.0))
}

fn random_problem(rng: &mut ChaCha8Rng, n: usize) -> DiscreteBridgeProblem {
    let prior = TransitionKernel::from_weights(random_positive(rng, n, n), 1.0).unwrap();
    let p0 = Marginal::from_weights(random_positive(rng, n, 1).column(0).into_owned()).unwrap();
    let pt = Marginal::from_weights(random_positive(rng, n, 1).column(0).into_owned()).unwrap();
    DiscreteBridgeProblem::new(prior, p0, pt).unwrap()
}

fn coupling_error(q: &DMatrix<f64>, p: &DiscreteBridgeProblem) -> f64 {
    let rows: DVector<f64> = q.column_sum();
    let cols: DVector<f64> = q.row_sum().transpose();
    (rows - p.p0().as_vector()).amax().max((cols - p.p_t().as_vector()).amax())
}

fn birkhoff_certificate() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_margin = f64::NEG_INFINITY;
    for i in 0..200 {
        let n = 2 + i * 98 / 199;
        let p = random_problem(&mut rng, n);
        let ratio = birkhoff_ratio(&PositiveMatrix::new(p.prior().matrix().clone()).unwrap()).unwrap();
        let sol = solve(&p, 1e-12, 10_000).map_err(|e| format!("kernel {i} (n = {n}): {e}"))?;
        for f in sol.contraction_factors(1e-10) {
            worst_margin = worst_margin.max(f - ratio * ratio);
            ensure(f <= ratio * ratio + 1e-9, || format!("kernel {i}: factor {f} above bound {}", ratio * ratio))?;
        }
    }
    let e = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
    let r = birkhoff_ratio(&PositiveMatrix::new(e).unwrap()).unwrap();
    ensure((r - 1.0 / 3.0).abs() <= 1e-12, || format!("ratio of [[2,1],[1,2]] is {r}"))?;
    within(start.elapsed(), 30.0)?;
    Ok(format!("max(factor - bound) = {worst_margin:.2e}, ratio(E) = {r:.15}"))
}

fn schroedinger_residuals() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let grid = Grid1D::new(-4.0, 4.0, 400).unwrap();
    let heat = DiscreteBridgeProblem::from_chain(
        vec![build_heat_kernel(&grid, 0.1, 0.25).unwrap(); 4],
        Marginal::gaussian(&grid, -1.0, 0.5).unwrap(),
        Marginal::gaussian(&grid, 1.0, 0.5).unwrap(),
    )
    .unwrap();
    let mut worst: f64 = 0.0;
    for (name, p) in [("heat", heat), ("random", random_problem(&mut rng, 400))] {
        let start = Instant::now();
        let sol = solve(&p, 1e-12, 100_000).map_err(|e| format!("{name}: {e}"))?;
        let (r0, rt) = sol.endpoint_residuals(&p);
        let q = bridge_coupling(&sol, &p).unwrap();
        let ce = coupling_error(&q, &p);
        ensure(r0.max(rt) <= 1e-10, || format!("{name}: residuals {r0:e} {rt:e}"))?;
        ensure(ce <= 1e-10, || format!("{name}: coupling marginal error {ce:e}"))?;
        within(start.elapsed(), 10.0)?;
        worst = worst.max(r0).max(rt).max(ce);
    }
    Ok(format!("400-state problems, worst residual {worst:.2e}"))
}

fn prior_fixed_point() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for n in [2usize, 5, 20, 100] {
        let p = random_problem(&mut rng, n);
        let pt = propagate(p.p0(), p.prior()).unwrap();
        let q = DiscreteBridgeProblem::new(p.prior().clone(), p.p0().clone(), pt).unwrap();
        let sol = solve(&q, 1e-12, 10).map_err(|e| e.to_string())?;
        ensure(sol.iterations <= 2, || format!("n = {n}: {} cycles", sol.iterations))?;
        let prior = DMatrix::from_diagonal(q.p0().as_vector()) * q.prior().matrix();
        let d = (bridge_coupling(&sol, &q).unwrap() - prior).amax();
        ensure(d <= 1e-10, || format!("n = {n}: coupling differs from prior by {d:e}"))?;
        worst = worst.max(d);
    }
    Ok(format!("max coupling difference {worst:.2e}"))
}

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

fn gaussian_oracle() -> Check {
    let start = Instant::now();
    let sys = LinearSystem::new(scalar(0.0), scalar(1.0), scalar(1.0), 1.0).unwrap();
    let s0 = GaussianState::centered(scalar(1.0)).unwrap();
    let s1 = GaussianState::centered(scalar(0.25)).unwrap();
    let sched = solve_gauss_bridge(&sys, &s0, &s1, 1000, 1e-9).map_err(|e| e.to_string())?;
    let path = covariance_path(&sched, &sys, &s0).unwrap();
    let ode = path.last().unwrap()[(0, 0)];
    ensure((ode - 0.25).abs() <= 1e-6, || format!("Lyapunov terminal variance {ode}"))?;

    let dynamics = LinearDynamics {
        a: sys.a.clone(),
        b: sys.b.clone(),
        b1: sys.b1.clone(),
        policy: Policy::schedule(&sched),
    };
    let cfg = SimConfig::new(1.0, 1000, 100_000, 2024).recording_every(1000);
    let m = simulate_moments(&dynamics, &Initial::Gaussian(s0.clone()), &cfg).unwrap();
    let last = m.times.len() - 1;
    let (var, se) = (m.covariances[last][(0, 0)], m.covariance_std_error(last, 0, 0));
    ensure((var - 0.25).abs() <= 3.0 * se, || format!("Monte-Carlo variance {var} ± {se}"))?;

    let s2 = GaussianState::centered(scalar(2.0)).unwrap();
    let free = solve_gauss_bridge(&sys, &s0, &s2, 400, 1e-9).map_err(|e| e.to_string())?;
    let pi_max = free.pi.iter().map(|p| p.amax()).fold(0.0, f64::max);
    let energy = control_energy(&free, &covariance_path(&free, &sys, &s0).unwrap()).unwrap();
    ensure(pi_max <= 1e-8 && energy <= 1e-10, || format!("free case: |Pi| {pi_max:e}, energy {energy:e}"))?;
    within(start.elapsed(), 60.0)?;
    Ok(format!(
        "ODE {ode:.10}, MC {var:.5} (z = {:.2}), free |Pi| {pi_max:.1e}",
        (var - 0.25) / se
    ))
}

fn oscillator_steering() -> Check {
    let start = Instant::now();
    let model = OscillatorModel::unit();
    let init = target_state(&model, 1.0).unwrap();
    let plan = cooling_plan(&model, &init, 0.25, 1.0, 1000, 1e-8).map_err(|e| e.to_string())?;
    ensure(plan.steering_error <= 1e-4, || format!("ODE terminal error {}", plan.steering_error))?;
    let cfg = SimConfig::new(1.0, 1000, 100_000, 17).recording_every(1000);
    let m = simulate_moments(&plan.dynamics(), &Initial::Gaussian(init), &cfg).unwrap();
    let last = m.times.len() - 1;
    let mut zmax: f64 = 0.0;
    for (i, j) in [(0, 0), (0, 1), (1, 1)] {
        let z = (m.covariances[last][(i, j)] - plan.target.covariance[(i, j)]) / m.covariance_std_error(last, i, j);
        zmax = zmax.max(z.abs());
    }
    ensure(zmax <= 3.0, || format!("Monte-Carlo covariance off by {zmax:.2} standard errors"))?;
    let temps = plan.effective_temperature().unwrap();
    let dt = (temps.from_position - 0.25).abs().max((temps.from_velocity - 0.25).abs());
    ensure(dt <= 1e-6, || format!("effective temperatures {temps:?}"))?;
    within(start.elapsed(), 120.0)?;
    Ok(format!("ODE error {:.1e}, MC max |z| {zmax:.2}, T_eff error {dt:.1e}", plan.steering_error))
}

/// Matrix of `vec(K) -> vech(B K S + S K' B')`, built from the definition.
fn constraint(p: &StationaryProblem) -> DMatrix<f64> {
    let (n, m) = (p.a.nrows(), p.b.ncols());
    let mut c = DMatrix::zeros(n * (n + 1) / 2, m * n);
    for col in 0..m * n {
        let mut k = DMatrix::zeros(m, n);
        k[(col % m, col / m)] = 1.0;
        let img = &p.b * &k * &p.sigma + &p.sigma * k.transpose() * p.b.transpose();
        let mut r = 0;
        for j in 0..n {
            for i in 0..=j {
                c[(r, col)] = img[(i, j)];
                r += 1;
            }
        }
    }
    c
}

fn stationary_certificates() -> Check {
    let start = Instant::now();
    let a = DMatrix::from_row_slice(2, 2, &[0., 1., -1., -1.]);
    let b = DMatrix::from_column_slice(2, 1, &[0., 1.]);
    let osc = |sigma: DMatrix<f64>| StationaryProblem::new(a.clone(), b.clone(), b.clone(), sigma).unwrap();

    let g = optimal_stationary_gain(&osc(DMatrix::identity(2, 2))).map_err(|e| e.to_string())?;
    ensure(g.k[(0, 0)].abs() <= 1e-8 && (g.k[(0, 1)] + 0.5).abs() <= 1e-8, || format!("K = {}", g.k))?;
    ensure((g.power - 0.25).abs() <= 1e-8, || format!("J_power = {}", g.power))?;

    let bad = check_feasibility(&osc(DMatrix::from_row_slice(2, 2, &[1., 0.5, 0.5, 1.])));
    ensure(!bad.feasible && bad.residual >= 0.9, || format!("correlated target: {bad:?}"))?;

    let free = solve_lyapunov(&a, &(&b * b.transpose())).unwrap();
    let g0 = optimal_stationary_gain(&osc(free)).map_err(|e| e.to_string())?;
    ensure(g0.k.amax() <= 1e-8, || format!("uncontrolled law gave K = {}", g0.k))?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = StationaryProblem::new(
        DMatrix::from_row_slice(2, 2, &[-0.3, 1.0, -2.0, -0.5]),
        DMatrix::identity(2, 2),
        DMatrix::from_row_slice(2, 2, &[0.4, 0.0, 0.3, 0.8]),
        DMatrix::from_row_slice(2, 2, &[0.7, 0.2, 0.2, 0.5]),
    )
    .unwrap();
    let opt = optimal_stationary_gain(&p).map_err(|e| e.to_string())?;
    let c = constraint(&p);
    let square = c.clone().resize(c.ncols().max(c.nrows()), c.ncols(), 0.0);
    let svd = square.svd(false, true);
    let v_t = svd.v_t.unwrap();
    let rank = svd.singular_values.iter().filter(|s| **s > 1e-10).count();
    let mut best_gain = f64::INFINITY;
    for _ in 0..100 {
        let mut dk = DMatrix::zeros(2, 2);
        for i in rank..v_t.nrows() {
            dk += DMatrix::from_row_slice(2, 2, v_t.row(i).transpose().as_slice()).transpose() * uniform(&mut rng, -1.0, 1.0);
        }
        let k = &opt.k + dk;
        let closed = &p.a - &p.b * &k;
        let res = (&closed * &p.sigma + &p.sigma * closed.transpose() + &p.b1 * p.b1.transpose()).amax();
        ensure(res <= 1e-8, || format!("perturbation left the constraint set ({res:e})"))?;
        let power = (&k * &p.sigma * k.transpose()).trace();
        ensure(power >= opt.power - 1e-9, || format!("perturbation beat the optimum: {power} < {}", opt.power))?;
        best_gain = best_gain.min(power - opt.power);
    }
    within(start.elapsed(), 10.0)?;
    Ok(format!("K = [{:.1e}, {:.10}], min perturbation excess {best_gain:.2e}", g.k[(0, 0)], g.k[(0, 1)]))
}

fn zero_noise_limit() -> Check {
    let start = Instant::now();
    let grid = Grid1D::new(-4.0, 4.0, 400).unwrap();
    let a = Gaussian1D::new(-1.0, 0.5).unwrap();
    let b = Gaussian1D::new(1.0, 0.5).unwrap();
    let report = zero_noise_study(&a, &b, &grid, &[0.5, 0.2, 0.1, 0.05], &StudyOptions::default())
        .map_err(|e| e.to_string())?;
    let w: Vec<f64> = report.entries.iter().map(|e| e.w2_mid).collect();
    ensure(report.strictly_decreasing_above_floor(), || format!("distances {w:?}"))?;
    ensure(w.windows(2).all(|p| p[1] < p[0]), || format!("distances {w:?}"))?;
    within(start.elapsed(), 120.0)?;
    let shown: Vec<String> = w.iter().map(|v| format!("{v:.3e}")).collect();
    Ok(format!("W2 [{}], floor {:.2e}", shown.join(", "), report.discretization_floor))
}

fn omt_oracles() -> Check {
    let q0 = Quantile1D::from_gaussian(&Gaussian1D::new(0.0, 1.0).unwrap(), 2000).unwrap();
    let q1 = Quantile1D::from_gaussian(&Gaussian1D::new(0.0, 2.0).unwrap(), 2000).unwrap();
    let map = monotone_map_1d(&q0, &q1).unwrap();
    let map_err = q0.values().iter().map(|x| (map.apply(*x) - 2.0 * x).abs()).fold(0.0, f64::max);
    ensure(map_err <= 1e-10, || format!("map differs from 2x by {map_err:e}"))?;

    let mut w_err: f64 = 0.0;
    for (m0, s0, m1, s1) in [(0.0, 1.0, 0.0, 2.0), (-1.0, 0.5, 1.0, 0.5), (3.0, 0.2, -2.0, 1.7), (0.0, 1.0, 0.0, 1.0)] {
        let w = wasserstein2(
            &Measure1D::Gaussian(Gaussian1D::new(m0, s0).unwrap()),
            &Measure1D::Gaussian(Gaussian1D::new(m1, s1).unwrap()),
        )
        .unwrap();
        let hand = ((m0 - m1) * (m0 - m1) + (s0 - s1) * (s0 - s1)).sqrt();
        w_err = w_err.max((w - hand).abs());
    }
    ensure(w_err <= 1e-12, || format!("Gaussian W2 off by {w_err:e}"))?;

    let grid = Grid1D::new(-4.0, 4.0, 161).unwrap();
    let times = [0.1, 0.25, 0.5, 0.75, 0.9];
    let path = GaussianPath::new(Gaussian1D::new(-1.0, 0.5).unwrap(), Gaussian1D::new(1.0, 1.5).unwrap());
    let exact = hj_residual(&DisplacementPath::Gaussian(path), &grid, &times).unwrap();
    let bent = hj_residual(&DisplacementPath::Gaussian(path.with_psi_perturbation(1e-2)), &grid, &times).unwrap();
    ensure(exact.hamilton_jacobi <= 1e-8, || format!("HJ residual {:e}", exact.hamilton_jacobi))?;
    ensure(bent.hamilton_jacobi >= 1e-3, || format!("perturbed HJ residual {:e}", bent.hamilton_jacobi))?;
    Ok(format!(
        "map error {map_err:.1e}, W2 error {w_err:.1e}, HJ {:.1e} vs perturbed {:.1e}",
        exact.hamilton_jacobi, bent.hamilton_jacobi
    ))
}

const SHIPPED: [(&str, &str, &str); 6] = [
    ("metric", "metric", include_str!("../../../configs/metric.toml")),
    ("bridge-discrete", "bridge_discrete", include_str!("../../../configs/bridge_discrete.toml")),
    ("bridge-gauss", "bridge_gauss", include_str!("../../../configs/bridge_gauss.toml")),
    ("maintain", "maintain", include_str!("../../../configs/maintain.toml")),
    ("cool", "cool", include_str!("../../../configs/cool.toml")),
    ("limit-study", "limit_study", include_str!("../../../configs/limit_study.toml")),
];

/// Writes `text` as `<dir>/<name>.toml`, runs the binary and returns the output directory.
fn run_cli(dir: &Path, command: &str, name: &str, text: &str) -> Result<PathBuf, String> {
    let cfg = dir.join(format!("{name}.toml"));
    std::fs::write(&cfg, text).map_err(|e| e.to_string())?;
    let out = Command::new(env!("CARGO_BIN_EXE_sbridge"))
        .arg(command)
        .arg(&cfg)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.code() == Some(0), || {
        format!("{command} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr))
    })?;
    let manifest: Value = read_json(&cfg.parent().unwrap().join("out").join(name).join("manifest.json"))?;
    let rel = manifest["config"]["output_dir"].as_str().ok_or("manifest lacks output_dir")?;
    Ok(dir.join(rel))
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    let header = r.headers().map_err(|e| e.to_string())?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        rows.push(rec.iter().map(|v| v.parse::<f64>().unwrap_or(f64::NAN)).collect());
    }
    Ok((header, rows))
}

fn cooling_tube_run(dir: &Path) -> Check {
    let start = Instant::now();
    let (cmd, name, text) = SHIPPED[4];
    let out = run_cli(dir, cmd, name, text)?;
    within(start.elapsed(), 120.0)?;
    let manifest = read_json(&out.join("manifest.json"))?;
    let (header, rows) = read_csv(&out.join("tube.csv"))?;
    let last = rows.last().ok_or("empty tube")?;
    let col = |n: &str| header.iter().position(|h| h == n).ok_or(format!("tube.csv lacks {n}"));
    let se = &manifest["results"]["terminal_covariance_std_error"];
    let k_sigma = 3.0;
    let mut worst_z: f64 = 0.0;
    for i in 0..2 {
        let lo = last[col(&format!("lo_{}", i + 1))?];
        let hi = last[col(&format!("hi_{}", i + 1))?];
        let std = last[col(&format!("std_{}", i + 1))?];
        let half = (hi - lo) / 2.0;
        // delta method: se(s) = se(s^2) / (2 s)
        let se_half = k_sigma * se[i][i].as_f64().ok_or("missing standard error")? / (2.0 * std);
        let z = (half - 1.5) / se_half;
        worst_z = worst_z.max(z.abs());
        ensure(z.abs() <= 3.0, || format!("coordinate {}: half-width {half} (z = {z:.2})", i + 1))?;
    }
    let (_, paths) = read_csv(&out.join("paths.csv"))?;
    let mut ids: Vec<i64> = paths.iter().map(|r| r[0] as i64).collect();
    ids.dedup();
    ensure(ids.len() == 20, || format!("paths.csv holds {} paths", ids.len()))?;
    Ok(format!("terminal half-widths within {worst_z:.2} SE of 1.5, 20 paths written"))
}

/// Every artifact, with the manifest's run-specific fields removed.
fn snapshot(out: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(out).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let bytes = if name == "manifest.json" {
            let mut m = read_json(&path)?;
            let obj = m.as_object_mut().ok_or("manifest is not an object")?;
            obj.remove("wall_time_seconds");
            obj.remove("config_path");
            serde_json::to_vec(&m).unwrap()
        } else {
            std::fs::read(&path).map_err(|e| e.to_string())?
        };
        files.insert(name, bytes);
    }
    Ok(files)
}

fn determinism(first_cool: &Path) -> Check {
    let mut compared = 0;
    for (cmd, name, text) in SHIPPED {
        let a = tempfile::tempdir().map_err(|e| e.to_string())?;
        let b = tempfile::tempdir().map_err(|e| e.to_string())?;
        let first = if cmd == "cool" {
            first_cool.join("out").join(name)
        } else {
            run_cli(a.path(), cmd, name, text)?
        };
        let second = run_cli(b.path(), cmd, name, text)?;
        let (x, y) = (snapshot(&first)?, snapshot(&second)?);
        ensure(x.keys().eq(y.keys()), || format!("{cmd}: different artifact sets"))?;
        for (file, bytes) in &x {
            ensure(&y[file] == bytes, || format!("{cmd}: {file} differs between runs"))?;
        }
        compared += x.len();
    }
    Ok(format!("{compared} artifacts over 6 subcommands identical"))
}

fn main() {
    let scratch = tempfile::tempdir().expect("temporary directory");
    let dir = scratch.path().to_path_buf();
    let criteria: Vec<(&str, Box<dyn FnOnce() -> Check>)> = vec![
        ("Birkhoff certificate", Box::new(birkhoff_certificate)),
        ("Schroedinger-system residuals", Box::new(schroedinger_residuals)),
        ("prior fixed point", Box::new(prior_fixed_point)),
        ("Gaussian steering oracle", Box::new(gaussian_oracle)),
        ("degenerate-channel oscillator steering", Box::new(oscillator_steering)),
        ("stationary certificates", Box::new(stationary_certificates)),
        ("zero-noise limit", Box::new(zero_noise_limit)),
        ("OMT oracles", Box::new(omt_oracles)),
        ("cooling tube reproduction", Box::new({
            let d = dir.clone();
            move || cooling_tube_run(&d)
        })),
        ("determinism", Box::new({
            let d = dir.clone();
            move || determinism(&d)
        })),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} ({secs:.1} s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} ({secs:.1} s)", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
