//! Split-step Fourier propagation of the nonlinear Schrödinger equation,
//! read as a deep complex-valued network whose only trainable weights are the
//! dispersion coefficient `beta` and the Kerr coefficient `gamma`.
//!
//! The crate is organised bottom-up:
//!
//! - [`signal`]: RRC pulse shaping, 16QAM symbol generation, AWGN and
//!   matched-filter denoising of synthetic fiber signals.
//! - [`propagator`]: the Strang-split forward solver (spectral dispersion
//!   steps, pointwise Kerr steps) and the time-domain Fresnel kernel.
//! - [`nlsnet`]: the network view of the solver, the normalized loss and its
//!   exact reverse-mode gradient with respect to `(beta, gamma)`.
//! - [`estimator`]: GD with momentum, Adam, Adadelta and RMSprop fits.
//! - [`landscape`]: loss-landscape scans, hyper-parameter sweeps,
//!   bias-variance statistics and a parameter-sensitivity probe.
//! - [`attenuation`]: the closed-form estimate of the attenuation coefficient.
//! - [`dataset`]: reproducible generation of `(input, target)` pairs.
//!
//! Units throughout: time in ps, distance in km, `beta` in ps²/km, `gamma`
//! in 1/(W·km), power in W.

pub mod attenuation;
pub mod dataset;
mod error;
pub mod estimator;
pub mod landscape;
pub mod nlsnet;
pub mod propagator;
pub mod signal;
mod spectral;
mod sum;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Ground-truth dispersion coefficient used throughout the experiments.
pub const BETA_TRUE: f64 = -21.6;
/// Ground-truth Kerr coefficient used throughout the experiments.
pub const GAMMA_TRUE: f64 = 1.6;
