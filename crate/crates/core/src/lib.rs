//! Variance-based sensitivity analysis of stochastic simulators through
//! Gaussian-process surrogates.
//!
//! The crate covers covariance kernels and their Mercer spectra, the
//! finite-data BLUP and its idealized spectral counterpart, marginal
//! likelihood fitting, pick-freeze Sobol estimation with asymptotic
//! confidence intervals, budget planning, and a heat-equation test problem.

pub mod budget;
pub mod config;
pub mod error;
pub mod harness;
pub mod heat;
pub mod hyperfit;
pub mod io;
pub mod kernels;
pub mod optim;
pub mod quadrature;
pub mod sobol;
pub mod surrogate;

pub use error::{Error, Result};
