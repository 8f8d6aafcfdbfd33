use nalgebra::{DMatrix, DVector};
use sbridge_core::oscillator_cooling::{cooling_plan, target_state, OscillatorModel};
use sbridge_core::sde_lab::{simulate, simulate_moments, tube_stats, Initial, LinearDynamics, Policy, SimConfig, TubeStats};

fn brownian() -> LinearDynamics {
    LinearDynamics {
        a: DMatrix::zeros(1, 1),
        b: DMatrix::zeros(1, 1),
        b1: DMatrix::from_element(1, 1, 1.0),
        policy: Policy::Zero,
    }
}

#[test]
fn brownian_variance_and_tube_width() {
    let n = 100_000;
    let m = simulate_moments(&brownian(), &Initial::Fixed(DVector::zeros(1)), &SimConfig::new(1.0, 10, n, 1)).unwrap();
    let var = m.covariances.last().unwrap()[(0, 0)];
    assert!((var - 1.0).abs() <= 3.0 * (2.0 / (n as f64 - 1.0)).sqrt(), "variance {var}");

    let tube = TubeStats::from_moments(&m, 3.0).unwrap();
    for (k, t) in tube.times.iter().enumerate().skip(1) {
        // std of a sample standard deviation ≈ σ/√(2(n−1))
        let se = 3.0 * t.sqrt() / (2.0 * (n as f64 - 1.0)).sqrt();
        let half = tube.hi[k][0] - tube.mean[k][0];
        assert!((half - 3.0 * t.sqrt()).abs() <= 3.0 * se, "t={t}: half-width {half}");
        assert_eq!(tube.lo[k][0], tube.mean[k][0] - 3.0 * tube.std[k][0]);
    }
}

#[test]
fn three_sigma_coverage_of_a_gaussian_ensemble() {
    let n = 100_000;
    let ens = simulate(&brownian(), &Initial::Fixed(DVector::zeros(1)), &SimConfig::new(1.0, 4, n, 3)).unwrap();
    let tube = tube_stats(&ens, 3.0).unwrap();
    for k in 1..ens.n_knots() {
        let inside = (0..n)
            .filter(|&p| {
                let x = ens.state(p, k)[0];
                x >= tube.lo[k][0] && x <= tube.hi[k][0]
            })
            .count() as f64
            / n as f64;
        assert!((0.995..=0.999).contains(&inside), "knot {k}: coverage {inside}");
    }
}

#[test]
fn euler_weak_order_for_ou_mean() {
    let ou = LinearDynamics {
        a: DMatrix::from_element(1, 1, -1.0),
        b: DMatrix::zeros(1, 1),
        b1: DMatrix::from_element(1, 1, 0.1),
        policy: Policy::Zero,
    };
    let exact = (-1f64).exp();
    let errors: Vec<f64> = [4usize, 8, 16]
        .iter()
        .map(|&steps| {
            let m = simulate_moments(&ou, &Initial::Fixed(DVector::from_element(1, 1.0)), &SimConfig::new(1.0, steps, 100_000, 9)).unwrap();
            (m.means.last().unwrap()[0] - exact).abs()
        })
        .collect();
    let slope = (errors[0] / errors[2]).log2() / 2.0;
    assert!(slope >= 0.8, "errors {errors:?}, slope {slope}");
}

#[test]
fn steered_oscillator_ensemble_hits_the_cooled_covariance() {
    let model = OscillatorModel::unit();
    let start = target_state(&model, 1.0).unwrap();
    let plan = cooling_plan(&model, &start, 0.25, 1.0, 1000, 1e-8).unwrap();
    let cfg = SimConfig::new(1.0, 1000, 100_000, 17).recording_every(1000);
    let m = simulate_moments(&plan.dynamics(), &Initial::Gaussian(start), &cfg).unwrap();
    let last = m.times.len() - 1;
    let cov = &m.covariances[last];
    for (i, j) in [(0, 0), (0, 1), (1, 1)] {
        let want = plan.target.covariance[(i, j)];
        let se = m.covariance_std_error(last, i, j);
        assert!((cov[(i, j)] - want).abs() <= 3.0 * se, "entry ({i},{j}) = {}, want {want} ± {}", cov[(i, j)], 3.0 * se);
    }
}

#[test]
fn maintenance_phase_holds_the_effective_temperature() {
    let model = OscillatorModel::unit();
    let start = target_state(&model, 0.25).unwrap();
    let plan = cooling_plan(&model, &start, 0.25, 1.0, 400, 1e-8).unwrap();
    // start already at the target and run the constant gain only
    let dynamics = LinearDynamics {
        policy: Policy::Constant(plan.maintenance.k.clone()),
        ..plan.dynamics()
    };
    let cfg = SimConfig::new(3.0, 3000, 50_000, 23).recording_every(1000);
    let m = simulate_moments(&dynamics, &Initial::Gaussian(start), &cfg).unwrap();
    for k in 0..m.times.len() {
        for i in 0..2 {
            let se = m.covariance_std_error(k, i, i);
            assert!((m.covariances[k][(i, i)] - 0.25).abs() <= 4.0 * se + 2e-3);
        }
    }
}
