//! Config-driven runner behind the `sbridge` binary.
//!
//! A run reads one TOML file, writes CSV artifacts into the configured output
//! directory and always finishes with `manifest.json` (sorted keys: command,
//! config echo, versions, seed, wall time, status, outputs, results). A solver
//! that fails to converge also leaves `diagnostic.json`.

pub mod commands;
pub mod config;
pub mod outcome;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use config::{load, Loaded};
pub use outcome::{CliError, EXIT_IO, EXIT_NON_CONVERGENCE, EXIT_OK, EXIT_VALIDATION};

pub const MANIFEST: &str = "manifest.json";
pub const DIAGNOSTIC: &str = "diagnostic.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    BridgeDiscrete,
    BridgeGauss,
    Maintain,
    Cool,
    LimitStudy,
    Metric,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::BridgeDiscrete => "bridge-discrete",
            Command::BridgeGauss => "bridge-gauss",
            Command::Maintain => "maintain",
            Command::Cool => "cool",
            Command::LimitStudy => "limit-study",
            Command::Metric => "metric",
        }
    }
}

/// Keys shared by every config.
pub trait Common {
    fn output_dir(&self) -> &Path;
    fn seed(&self) -> u64;
}

macro_rules! common {
    ($($t:ty),*) => {$(
        impl Common for $t {
            fn output_dir(&self) -> &Path {
                &self.output_dir
            }
            fn seed(&self) -> u64 {
                self.seed
            }
        }
    )*};
}

common!(
    config::BridgeDiscreteConfig,
    config::BridgeGaussConfig,
    config::MaintainConfig,
    config::CoolConfig,
    config::LimitStudyConfig,
    config::MetricConfig
);

/// Output bookkeeping for one run.
pub struct Session {
    pub out_dir: PathBuf,
    files: Vec<String>,
}

impl Session {
    /// Path for an artifact, recorded in the manifest's output list.
    pub fn artifact(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.out_dir.join(name)
    }
}

/// Finite numbers as JSON numbers, anything else as a string (`inf`, `nan`).
pub fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(sbridge_core::csv_io::format_number(v))
    }
}

pub fn matrix_json(m: &nalgebra::DMatrix<f64>) -> Value {
    Value::Array(
        m.row_iter()
            .map(|r| Value::Array(r.iter().map(|v| num(*v)).collect()))
            .collect(),
    )
}

fn execute<T: DeserializeOwned + Common>(
    command: Command,
    config_path: &Path,
    body: impl FnOnce(&Loaded<T>, &mut Session) -> Result<Value, CliError>,
) -> Result<PathBuf, CliError> {
    let started = Instant::now();
    let loaded: Loaded<T> = load(config_path)?;
    let out_dir = loaded.resolve(loaded.config.output_dir());
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out_dir.display())))?;
    let mut session = Session {
        out_dir: out_dir.clone(),
        files: Vec::new(),
    };
    let result = body(&loaded, &mut session);

    if let Err(CliError::NonConvergence {
        iterations,
        last_change,
        detail,
    }) = &result
    {
        let diag = json!({
            "command": command.name(),
            "iterations": iterations,
            "last_change": num(*last_change),
            "detail": detail,
            "hint": "raise the iteration budget, loosen the tolerance or refine the grid",
        });
        write_json(&session.artifact(DIAGNOSTIC), &diag)?;
    }

    let (status, exit_code, results, error) = match &result {
        Ok(v) => ("ok", EXIT_OK, v.clone(), Value::Null),
        Err(e) => (
            match e {
                CliError::Validation(_) => "validation_error",
                CliError::NonConvergence { .. } => "non_convergence",
                CliError::Io(_) => "io_error",
            },
            e.exit_code(),
            Value::Null,
            json!(e.to_string()),
        ),
    };
    let mut outputs = session.files.clone();
    outputs.push(MANIFEST.to_string());
    outputs.sort();
    let manifest = json!({
        "command": command.name(),
        "config": serde_json::to_value(&loaded.raw).map_err(|e| CliError::Io(e.to_string()))?,
        "config_path": config_path.display().to_string(),
        "versions": {
            "sbridge_cli": env!("CARGO_PKG_VERSION"),
            "sbridge_core": sbridge_core::VERSION,
        },
        "seed": loaded.config.seed(),
        "wall_time_seconds": started.elapsed().as_secs_f64(),
        "status": status,
        "exit_code": exit_code,
        "outputs": outputs,
        "results": results,
        "error": error,
    });
    write_json(&out_dir.join(MANIFEST), &manifest)?;
    result.map(|_| out_dir)
}

fn write_json(path: &Path, v: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Runs one subcommand; returns the output directory.
pub fn run(command: Command, config_path: &Path) -> Result<PathBuf, CliError> {
    match command {
        Command::BridgeDiscrete => execute(command, config_path, commands::bridge_discrete),
        Command::BridgeGauss => execute(command, config_path, commands::bridge_gauss),
        Command::Maintain => execute(command, config_path, commands::maintain),
        Command::Cool => execute(command, config_path, commands::cool),
        Command::LimitStudy => execute(command, config_path, commands::limit_study),
        Command::Metric => execute(command, config_path, commands::metric),
    }
}
