//! Run configurations, one strict TOML schema per subcommand.
//!
//! Every table rejects unknown keys. Relative paths are resolved against the
//! directory holding the config file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::outcome::CliError;

pub type Matrix = Vec<Vec<f64>>;

fn default_seed() -> u64 {
    0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_bridge_tol")]
    pub tol: f64,
    #[serde(default = "default_max_cycles")]
    pub max_cycles: usize,
    #[serde(default)]
    pub domain: DomainChoice,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: default_bridge_tol(),
            max_cycles: default_max_cycles(),
            domain: DomainChoice::Auto,
        }
    }
}

fn default_bridge_tol() -> f64 {
    1e-12
}

fn default_max_cycles() -> usize {
    100_000
}

#[derive(Debug, Default, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainChoice {
    #[default]
    Auto,
    Linear,
    Log,
}

/// One-step kernel of the prior chain.
#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorConfig {
    Matrix {
        rows: Matrix,
        #[serde(default = "one")]
        step_duration: f64,
        #[serde(default = "one_step")]
        steps: usize,
    },
    Csv {
        path: PathBuf,
        #[serde(default = "one")]
        step_duration: f64,
        #[serde(default = "one_step")]
        steps: usize,
    },
    Heat {
        lower: f64,
        upper: f64,
        n_points: usize,
        epsilon: f64,
        dt: f64,
        #[serde(default = "one_step")]
        steps: usize,
    },
}

fn one() -> f64 {
    1.0
}

fn one_step() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarginalConfig {
    Values { values: Vec<f64> },
    Csv { path: PathBuf },
    /// Discretised Gaussian; needs a `heat` prior for its grid.
    Gaussian { mean: f64, std: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeDiscreteConfig {
    pub output_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub prior: PriorConfig,
    pub p0: MarginalConfig,
    pub p_t: MarginalConfig,
    #[serde(default)]
    pub solver: SolverConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianStateConfig {
    pub mean: Option<Vec<f64>>,
    pub covariance: Matrix,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    #[serde(default = "default_k_sigma")]
    pub k_sigma: f64,
    #[serde(default = "one_step")]
    pub record_every: usize,
    /// Number of individual paths written to `paths.csv` (at most 100).
    #[serde(default)]
    pub paths_csv: usize,
}

fn default_k_sigma() -> f64 {
    3.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeGaussConfig {
    pub output_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub a: Matrix,
    pub b: Matrix,
    /// Noise channel; defaults to `b`.
    pub b1: Option<Matrix>,
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default = "default_n_grid")]
    pub n_grid: usize,
    #[serde(default = "default_gauss_tol")]
    pub tol: f64,
    pub start: GaussianStateConfig,
    pub end: GaussianStateConfig,
    pub simulation: Option<SimulationConfig>,
}

fn default_n_grid() -> usize {
    400
}

fn default_gauss_tol() -> f64 {
    1e-8
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaintainConfig {
    pub output_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub a: Matrix,
    pub b: Matrix,
    pub b1: Matrix,
    pub sigma: Matrix,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoolConfig {
    pub output_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "one")]
    pub mass: f64,
    #[serde(default = "one")]
    pub damping: f64,
    #[serde(default = "one")]
    pub boltzmann: f64,
    #[serde(default = "one")]
    pub temperature: f64,
    #[serde(default = "one")]
    pub spring: f64,
    pub t_eff: f64,
    #[serde(default = "one")]
    pub t1: f64,
    /// Initial law is Maxwell–Boltzmann at this temperature (defaults to the bath's).
    pub initial_temperature: Option<f64>,
    /// End of the simulated window; the maintenance gain acts after `t1`.
    pub horizon: Option<f64>,
    #[serde(default = "default_cool_grid")]
    pub n_grid: usize,
    #[serde(default = "default_gauss_tol")]
    pub tol: f64,
    pub simulation: SimulationConfig,
}

fn default_cool_grid() -> usize {
    1000
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gaussian1DConfig {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitStudyConfig {
    pub output_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub rho0: Gaussian1DConfig,
    pub rho1: Gaussian1DConfig,
    pub lower: f64,
    pub upper: f64,
    pub n_points: usize,
    pub epsilons: Vec<f64>,
    #[serde(default = "default_time_steps")]
    pub n_time_steps: usize,
    #[serde(default = "default_quantiles")]
    pub n_quantiles: usize,
    #[serde(default = "default_study_tol")]
    pub tol: f64,
    #[serde(default = "default_study_cycles")]
    pub max_cycles: usize,
}

fn default_time_steps() -> usize {
    8
}

fn default_quantiles() -> usize {
    2000
}

fn default_study_tol() -> f64 {
    1e-10
}

fn default_study_cycles() -> usize {
    200_000
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    pub output_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub kernel: Option<Matrix>,
    pub kernel_csv: Option<PathBuf>,
    /// Optional pair of positive vectors whose Hilbert distance is reported.
    pub x: Option<Vec<f64>>,
    pub y: Option<Vec<f64>>,
}

/// Parsed config plus its raw TOML (echoed in the manifest) and base directory.
pub struct Loaded<T> {
    pub config: T,
    pub raw: toml::Value,
    pub base: PathBuf,
}

impl<T> Loaded<T> {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }
}

pub fn load<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Loaded<T>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
    let config: T = toml::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
    let raw: toml::Value = toml::from_str(&text).map_err(|e| CliError::Validation(e.to_string()))?;
    let base = path
        .parent()
        .map(Path::to_path_buf)
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(Loaded { config, raw, base })
}

pub fn matrix(rows: &Matrix, what: &str) -> Result<nalgebra::DMatrix<f64>, CliError> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::Validation(format!("{what} must be a nonempty rectangular matrix")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CliError::Validation(format!("{what} has non-finite entries")));
    }
    Ok(nalgebra::DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}
