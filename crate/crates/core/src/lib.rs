//! Schrödinger bridges for Markov chains and linear stochastic systems.
//!
//! The crate is organised around the pieces needed to compute, check and
//! simulate bridges:
//!
//! - [`cone_metric`]: Hilbert projective metric and Birkhoff contraction ratios.
//! - [`markov_prior`]: grid heat kernels, kernel composition, marginal propagation.
//! - [`discrete_bridge`]: the four-map Fortet iteration with Hilbert-metric certificates.
//! - [`gaussian_bridge`]: finite-horizon covariance steering through coupled Riccati flows.
//! - [`stationary_steering`]: feasibility and minimum-power gains for stationary covariances.
//! - [`oscillator_cooling`]: the controlled stochastic oscillator and its cooling plan.
//! - [`sde_lab`]: Euler–Maruyama ensembles, moments and confidence tubes.
//! - [`omt_reference`]: exact 1D / Gaussian transport oracles and the zero-noise study.

pub mod cone_metric;
pub mod csv_io;
pub mod discrete_bridge;
mod error;
pub mod gaussian_bridge;
pub mod linalg;
pub mod markov_prior;
pub mod omt_reference;
pub mod oscillator_cooling;
pub mod sde_lab;
pub mod stationary_steering;

pub use error::{Error, Result};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
