use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use sbridge_core::cone_metric::{
    birkhoff_ratio, hilbert_distance, projective_diameter, ratio_from_diameter, PositiveMatrix, PositiveVector,
};
use sbridge_core::csv_io::{read_kernel_file, read_marginal_file, read_matrix_file, write_matrix, write_table_file};
use sbridge_core::discrete_bridge::{
    bridge_coupling, interpolate, relative_entropy, solve_with, DiscreteBridgeProblem, Domain, SolverOptions,
};
use sbridge_core::gaussian_bridge::{control_energy, covariance_path, solve_gauss_bridge, GaussianState, LinearSystem};
use sbridge_core::markov_prior::{build_heat_kernel, Grid1D, Marginal, TransitionKernel};
use sbridge_core::omt_reference::{zero_noise_study, Gaussian1D, StudyOptions};
use sbridge_core::oscillator_cooling::{cooling_plan, target_state, OscillatorModel};
use sbridge_core::sde_lab::{
    simulate, simulate_moments, Dynamics, Initial, LinearDynamics, MomentSeries, Policy, SimConfig, TubeStats,
    MAX_PATHS_CSV,
};
use sbridge_core::stationary_steering::{check_feasibility, optimal_stationary_gain, StationaryProblem};

use crate::config::{
    matrix, BridgeDiscreteConfig, BridgeGaussConfig, CoolConfig, DomainChoice, GaussianStateConfig, LimitStudyConfig,
    Loaded, MaintainConfig, MarginalConfig, MetricConfig, PriorConfig, SimulationConfig,
};
use crate::outcome::CliError;
use crate::{matrix_json, num, Session};

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn strings(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn write_matrix_file(path: &std::path::Path, m: &DMatrix<f64>) -> Result<(), CliError> {
    let f = std::fs::File::create(path)?;
    write_matrix(std::io::BufWriter::new(f), m)?;
    Ok(())
}

/// Upper-triangle entries and their `prefix_i_j` names (1-based).
fn vech_named(prefix: &str, n: usize) -> Vec<String> {
    let mut names = Vec::new();
    for i in 0..n {
        for j in i..n {
            names.push(format!("{prefix}_{}_{}", i + 1, j + 1));
        }
    }
    names
}

fn vech_values(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut v = Vec::new();
    for i in 0..n {
        for j in i..n {
            v.push(m[(i, j)]);
        }
    }
    v
}

pub fn bridge_discrete(l: &Loaded<BridgeDiscreteConfig>, s: &mut Session) -> Result<Value, CliError> {
    let c = &l.config;
    let (step, steps, grid) = match &c.prior {
        PriorConfig::Matrix { rows, step_duration, steps } => {
            (TransitionKernel::new(matrix(rows, "prior.rows")?, *step_duration)?, *steps, None)
        }
        PriorConfig::Csv { path, step_duration, steps } => (read_kernel_file(l.resolve(path), *step_duration)?, *steps, None),
        PriorConfig::Heat { lower, upper, n_points, epsilon, dt, steps } => {
            let grid = Grid1D::new(*lower, *upper, *n_points)?;
            (build_heat_kernel(&grid, *epsilon, *dt)?, *steps, Some(grid))
        }
    };
    if steps == 0 {
        return Err(invalid("prior.steps must be at least 1"));
    }
    let marginal = |m: &MarginalConfig, what: &str| -> Result<Marginal, CliError> {
        Ok(match m {
            MarginalConfig::Values { values } => Marginal::from_weights(DVector::from_column_slice(values))?,
            MarginalConfig::Csv { path } => read_marginal_file(l.resolve(path))?,
            MarginalConfig::Gaussian { mean, std } => {
                let g = grid
                    .as_ref()
                    .ok_or_else(|| invalid(format!("{what}: gaussian marginals need a heat prior")))?;
                Marginal::gaussian(g, *mean, *std)?
            }
        })
    };
    let p0 = marginal(&c.p0, "p0")?;
    let pt = marginal(&c.p_t, "p_t")?;
    let n = step.n_states();
    let problem = DiscreteBridgeProblem::from_chain(vec![step; steps], p0, pt)?;
    let opts = SolverOptions {
        tol: c.solver.tol,
        max_cycles: c.solver.max_cycles,
        domain: match c.solver.domain {
            DomainChoice::Auto => Domain::Auto,
            DomainChoice::Linear => Domain::Linear,
            DomainChoice::Log => Domain::Log,
        },
    };
    let ratio = birkhoff_ratio(&PositiveMatrix::new(problem.prior().matrix().clone())?)?;
    let sol = solve_with(&problem, &opts, None)?;
    let coupling = bridge_coupling(&sol, &problem)?;
    let path = interpolate(&sol, &problem)?;
    let (r0, rt) = sol.endpoint_residuals(&problem);
    let row_err = (coupling.column_sum() - problem.p0().as_vector()).amax();
    let col_err = (coupling.row_sum().transpose() - problem.p_t().as_vector()).amax();

    write_matrix_file(&s.artifact("coupling.csv"), &coupling)?;
    let (phi0, phihat0, phi_t, phihat_t) = (sol.phi0(), sol.phihat0(), sol.phi_t(), sol.phihat_t());
    write_table_file(
        s.artifact("potentials.csv"),
        &strings(&["state", "x", "phi0", "phihat0", "phi_t", "phihat_t"]),
        (0..n).map(|i| {
            let x = grid.as_ref().map_or(i as f64, |g| g.point(i));
            vec![i as f64, x, phi0[i], phihat0[i], phi_t[i], phihat_t[i]]
        }),
    )?;
    write_table_file(
        s.artifact("convergence.csv"),
        &strings(&["cycle", "hilbert_change", "marginal_residual"]),
        sol.convergence_log
            .iter()
            .map(|r| vec![r.cycle as f64, r.hilbert_change, r.marginal_residual]),
    )?;
    let dt = problem.prior().step_duration() / steps as f64;
    let mut header = strings(&["knot", "t"]);
    header.extend((0..n).map(|i| format!("p_{i}")));
    write_table_file(
        s.artifact("marginals.csv"),
        &header,
        path.iter().enumerate().map(|(k, m)| {
            let mut row = vec![k as f64, k as f64 * dt];
            row.extend(m.as_vector().iter());
            row
        }),
    )?;
    let factors = sol.contraction_factors(1e-10);
    Ok(json!({
        "n_states": n,
        "steps": steps,
        "iterations": sol.iterations,
        "domain": format!("{:?}", sol.domain).to_lowercase(),
        "endpoint_residual_p0": num(r0),
        "endpoint_residual_p_t": num(rt),
        "coupling_marginal_error": num(row_err.max(col_err)),
        "relative_entropy": num(relative_entropy(&sol, &problem)?),
        "birkhoff_ratio": num(ratio),
        "contraction_bound": num(ratio * ratio),
        "max_observed_contraction": num(factors.iter().copied().fold(0.0, f64::max)),
    }))
}

fn gaussian_state(c: &GaussianStateConfig, n: usize, what: &str) -> Result<GaussianState, CliError> {
    let cov = matrix(&c.covariance, &format!("{what}.covariance"))?;
    if cov.shape() != (n, n) {
        return Err(invalid(format!("{what}.covariance must be {n}x{n}")));
    }
    let mean = match &c.mean {
        Some(m) if m.len() != n => return Err(invalid(format!("{what}.mean must have {n} entries"))),
        Some(m) => DVector::from_column_slice(m),
        None => DVector::zeros(n),
    };
    Ok(GaussianState::new(mean, cov)?)
}

fn write_tube(s: &mut Session, m: &MomentSeries, k_sigma: f64) -> Result<TubeStats, CliError> {
    let tube = TubeStats::from_moments(m, k_sigma)?;
    tube.write_csv(s.artifact("tube.csv"))?;
    Ok(tube)
}

fn check_simulation(sim: &SimulationConfig) -> Result<(), CliError> {
    if sim.paths_csv > MAX_PATHS_CSV {
        return Err(invalid(format!("simulation.paths_csv is limited to {MAX_PATHS_CSV}")));
    }
    if sim.paths_csv > sim.n_paths {
        return Err(invalid("simulation.paths_csv exceeds simulation.n_paths"));
    }
    if !(sim.k_sigma > 0.0) {
        return Err(invalid("simulation.k_sigma must be positive"));
    }
    Ok(())
}

/// Moments for the whole ensemble plus, optionally, the first few paths; the
/// stored paths are the same draws as paths `0..k` of the ensemble.
fn run_ensemble(
    s: &mut Session,
    dynamics: &dyn Dynamics,
    initial: &Initial,
    sim: &SimulationConfig,
    horizon: f64,
    seed: u64,
) -> Result<MomentSeries, CliError> {
    check_simulation(sim)?;
    let cfg = SimConfig::new(horizon, sim.n_steps, sim.n_paths, seed).recording_every(sim.record_every);
    let moments = simulate_moments(dynamics, initial, &cfg)?;
    if sim.paths_csv > 0 {
        let few = simulate(dynamics, initial, &SimConfig { n_paths: sim.paths_csv, ..cfg })?;
        few.write_paths_csv(s.artifact("paths.csv"))?;
    }
    Ok(moments)
}

pub fn bridge_gauss(l: &Loaded<BridgeGaussConfig>, s: &mut Session) -> Result<Value, CliError> {
    let c = &l.config;
    let a = matrix(&c.a, "a")?;
    let b = matrix(&c.b, "b")?;
    let b1 = match &c.b1 {
        Some(m) => matrix(m, "b1")?,
        None => b.clone(),
    };
    let sys = LinearSystem::new(a, b, b1, c.horizon)?;
    let n = sys.dim();
    let start = gaussian_state(&c.start, n, "start")?;
    let end = gaussian_state(&c.end, n, "end")?;
    let sched = solve_gauss_bridge(&sys, &start, &end, c.n_grid, c.tol)?;
    let covs = covariance_path(&sched, &sys, &start)?;
    let energy = control_energy(&sched, &covs)?;

    let m = sys.n_inputs();
    let mut header = vec!["t".to_string()];
    header.extend(vech_named("pi", n));
    header.extend(vech_named("h", n));
    header.extend(vech_named("sigma", n));
    for i in 0..m {
        header.extend((0..n).map(|j| format!("k_{}_{}", i + 1, j + 1)));
    }
    header.extend((1..=n).map(|i| format!("mean_{i}")));
    header.extend((1..=m).map(|i| format!("v_{i}")));
    write_table_file(
        s.artifact("schedule.csv"),
        &header,
        (0..sched.len()).map(|k| {
            let mut row = vec![sched.times[k]];
            row.extend(vech_values(&sched.pi[k]));
            row.extend(vech_values(&sched.h[k]));
            row.extend(vech_values(&sched.sigma[k]));
            let g = sched.gain(k);
            for i in 0..m {
                row.extend(g.row(i).iter());
            }
            row.extend(sched.mean[k].iter());
            row.extend(sched.feedforward[k].iter());
            row
        }),
    )?;
    let mut header = vec!["t".to_string()];
    header.extend(vech_named("sigma", n));
    write_table_file(
        s.artifact("covariance_path.csv"),
        &header,
        covs.iter().zip(&sched.times).map(|(cv, t)| {
            let mut row = vec![*t];
            row.extend(vech_values(cv));
            row
        }),
    )?;
    let terminal = covs.last().expect("path has knots");
    let mut results = json!({
        "newton_iterations": sched.newton_iterations,
        "boundary_residual_start": num(sched.boundary_residuals.0),
        "boundary_residual_end": num(sched.boundary_residuals.1),
        "terminal_covariance": matrix_json(terminal),
        "terminal_error": num((terminal - &end.covariance).amax()),
        "control_energy": num(energy),
    });
    if let Some(sim) = &c.simulation {
        let dynamics = LinearDynamics {
            a: sys.a.clone(),
            b: sys.b.clone(),
            b1: sys.b1.clone(),
            policy: Policy::schedule(&sched),
        };
        let mom = run_ensemble(s, &dynamics, &Initial::Gaussian(start), sim, c.horizon, c.seed)?;
        write_tube(s, &mom, sim.k_sigma)?;
        let last = mom.times.len() - 1;
        results["monte_carlo"] = json!({
            "n_paths": sim.n_paths,
            "terminal_covariance": matrix_json(&mom.covariances[last]),
            "terminal_covariance_std_error": matrix_json(&DMatrix::from_fn(n, n, |i, j| mom.covariance_std_error(last, i, j))),
            "control_energy_mean": num(mom.energy_mean),
            "control_energy_std_error": num(mom.energy_std_error()),
        });
    }
    Ok(results)
}

pub fn maintain(l: &Loaded<MaintainConfig>, s: &mut Session) -> Result<Value, CliError> {
    let c = &l.config;
    let prob = StationaryProblem::new(
        matrix(&c.a, "a")?,
        matrix(&c.b, "b")?,
        matrix(&c.b1, "b1")?,
        matrix(&c.sigma, "sigma")?,
    )?;
    let report = check_feasibility(&prob);
    let mut results = json!({
        "feasible": report.feasible,
        "residual": num(report.residual),
        "threshold": num(report.threshold),
        "certificate": matrix_json(&report.certificate),
    });
    if report.feasible {
        let g = optimal_stationary_gain(&prob)?;
        write_matrix_file(&s.artifact("gain.csv"), &g.k)?;
        results["gain"] = matrix_json(&g.k);
        results["power"] = num(g.power);
        results["lyapunov_residual"] = num(g.lyapunov_residual);
        results["stable"] = json!(g.stable);
        results["closed_loop_eigenvalues"] =
            Value::Array(g.closed_loop_eigenvalues.iter().map(|z| json!([num(z.re), num(z.im)])).collect());
        results["kkt_rank"] = json!(g.kkt_rank);
        results["kkt_size"] = json!(g.kkt_size);
        results["degenerate"] = json!(g.degenerate);
    }
    Ok(results)
}

pub fn cool(l: &Loaded<CoolConfig>, s: &mut Session) -> Result<Value, CliError> {
    let c = &l.config;
    let model = OscillatorModel::new(c.mass, c.damping, c.boltzmann, c.temperature, c.spring)?;
    let initial = target_state(&model, c.initial_temperature.unwrap_or(c.temperature))?;
    let horizon = c.horizon.unwrap_or(c.t1);
    if !(horizon >= c.t1) {
        return Err(invalid("horizon must be at least t1"));
    }
    let plan = cooling_plan(&model, &initial, c.t_eff, c.t1, c.n_grid, c.tol)?;
    plan.write_csv(s.artifact("plan.csv"))?;
    let temps = plan.effective_temperature()?;

    let sim = &c.simulation;
    let mom = run_ensemble(s, &plan.dynamics(), &Initial::Gaussian(initial), sim, horizon, c.seed)?;
    let tube = write_tube(s, &mom, sim.k_sigma)?;
    let at_t1 = tube
        .times
        .iter()
        .position(|t| (t - c.t1).abs() <= 1e-9 * (1.0 + c.t1))
        .map(|k| tube.std[k].iter().map(|v| num(sim.k_sigma * v)).collect::<Vec<_>>());
    let expected: Vec<Value> = plan
        .target
        .covariance
        .diagonal()
        .iter()
        .map(|v| num(sim.k_sigma * v.sqrt()))
        .collect();
    let last = mom.times.len() - 1;
    Ok(json!({
        "sigma": num(model.sigma()),
        "target_covariance": matrix_json(&plan.target.covariance),
        "steering_terminal_error": num(plan.steering_error),
        "steering_energy": num(plan.steering_energy()?),
        "maintenance_gain": matrix_json(&plan.maintenance.k),
        "maintenance_power": num(plan.maintenance.power),
        "maintenance_error": num(plan.maintenance_error),
        "effective_temperature_position": num(temps.from_position),
        "effective_temperature_velocity": num(temps.from_velocity),
        "expected_half_widths": expected,
        "half_widths_at_t1": at_t1,
        "terminal_half_widths": tube.terminal_half_widths().iter().map(|v| num(*v)).collect::<Vec<_>>(),
        "terminal_covariance": matrix_json(&mom.covariances[last]),
        "terminal_covariance_std_error": matrix_json(&DMatrix::from_fn(2, 2, |i, j| mom.covariance_std_error(last, i, j))),
        "n_paths": sim.n_paths,
        "note": "qualitative cooling run; physical constants come from the config",
    }))
}

pub fn limit_study(l: &Loaded<LimitStudyConfig>, s: &mut Session) -> Result<Value, CliError> {
    let c = &l.config;
    let rho0 = Gaussian1D::new(c.rho0.mean, c.rho0.std)?;
    let rho1 = Gaussian1D::new(c.rho1.mean, c.rho1.std)?;
    let grid = Grid1D::new(c.lower, c.upper, c.n_points)?;
    let opts = StudyOptions {
        n_time_steps: c.n_time_steps,
        n_quantiles: c.n_quantiles,
        tol: c.tol,
        max_cycles: c.max_cycles,
    };
    let report = zero_noise_study(&rho0, &rho1, &grid, &c.epsilons, &opts)?;
    report.write_csv(s.artifact("limit_study.csv"))?;
    for (i, e) in report.entries.iter().enumerate() {
        write_table_file(
            s.artifact(&format!("convergence_{i}.csv")),
            &strings(&["cycle", "hilbert_change", "marginal_residual"]),
            e.convergence_log
                .iter()
                .map(|r| vec![r.cycle as f64, r.hilbert_change, r.marginal_residual]),
        )?;
    }
    Ok(json!({
        "w2_convention": "unsquared W2 for the cost |x-y|^2 (no factor 1/2)",
        "discretization_floor": num(report.discretization_floor),
        "strictly_decreasing_above_floor": report.strictly_decreasing_above_floor(),
        "entries": report.entries.iter().map(|e| json!({
            "epsilon": num(e.epsilon),
            "w2_mid": num(e.w2_mid),
            "bridge_cycles": e.bridge_cycles,
            "contraction_ratio_bound": num(e.contraction_ratio_bound),
        })).collect::<Vec<_>>(),
    }))
}

pub fn metric(l: &Loaded<MetricConfig>, s: &mut Session) -> Result<Value, CliError> {
    let c = &l.config;
    let kernel = match (&c.kernel, &c.kernel_csv) {
        (Some(rows), None) => matrix(rows, "kernel")?,
        (None, Some(p)) => read_matrix_file(l.resolve(p))?,
        _ => return Err(invalid("give exactly one of kernel and kernel_csv")),
    };
    let e = PositiveMatrix::new(kernel)?;
    let diameter = projective_diameter(&e)?;
    let ratio = ratio_from_diameter(diameter);
    write_table_file(
        s.artifact("ratio.csv"),
        &strings(&["diameter", "birkhoff_ratio", "contraction_bound"]),
        [vec![diameter.value(), ratio, ratio * ratio]],
    )?;
    let mut results = json!({
        "diameter": num(diameter.value()),
        "birkhoff_ratio": num(ratio),
        "contraction_bound": num(ratio * ratio),
        "strictly_positive": e.is_strict(),
    });
    match (&c.x, &c.y) {
        (Some(x), Some(y)) => {
            let d = hilbert_distance(&PositiveVector::from_slice(x)?, &PositiveVector::from_slice(y)?)?;
            results["hilbert_distance"] = num(d);
        }
        (None, None) => {}
        _ => return Err(invalid("x and y must be given together")),
    }
    Ok(results)
}
