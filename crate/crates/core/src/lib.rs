//! Differentially private density estimation on `[0,1]^d` by truncated
//! Fourier series.
//!
//! [`estimator::fit`] computes empirical coefficients up to a cut-off `M` and,
//! given a zCDP budget, perturbs them with calibrated complex Gaussian noise.
//! [`adaptive`] picks `M` from the data (Lepskii or penalized bias),
//! [`densities`] supplies ground truths with exact coefficients, and
//! [`experiments`] runs Monte-Carlo sweeps over `(n, rho)`.

pub mod adaptive;
pub mod cli;
pub mod densities;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod fourier;
pub mod privacy;
