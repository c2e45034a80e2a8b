use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{positive, Error, Result};
use crate::kernels::EigenSystem;

/// A truncated spectral sum together with a bound on what truncation dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncated {
    pub value: f64,
    pub tail_bound: f64,
}

/// `λ / (λ + σ²ε/T)`.
pub fn shrinkage_factor(eigenvalue: f64, noise_level: f64) -> f64 {
    eigenvalue / (eigenvalue + noise_level)
}

fn noise_level(budget: f64, noise_variance: f64) -> Result<f64> {
    positive("budget", budget)?;
    positive("noise_variance", noise_variance)?;
    Ok(noise_variance / budget)
}

/// `σ²_T(x) = Σ_p (σ²ε λ_p / T) / (σ²ε/T + λ_p) · φ_p(x)²`, truncated at P.
pub fn spectral_mse(eig: &EigenSystem, budget: f64, noise_variance: f64, x: &[f64]) -> Result<f64> {
    let level = noise_level(budget, noise_variance)?;
    let coeffs: Vec<f64> = eig
        .eigenvalues()
        .iter()
        .map(|&l| level * l / (level + l))
        .collect();
    eig.weighted_square_sum(&coeffs, x)
}

/// `Σ_p (s λ_p) / (s + λ_p)` for noise level `s = σ²ε/T`.
pub fn imse_from_eigenvalues(eigenvalues: &[f64], noise_level: f64) -> f64 {
    eigenvalues
        .iter()
        .map(|&l| noise_level * l / (noise_level + l))
        .sum()
}

/// `IMSE_T`, with the omitted trace as tail bound.
pub fn imse(eig: &EigenSystem, budget: f64, noise_variance: f64) -> Result<Truncated> {
    let level = noise_level(budget, noise_variance)?;
    Ok(Truncated {
        value: imse_from_eigenvalues(eig.eigenvalues(), level),
        tail_bound: eig.tail_mass(),
    })
}

/// `B²_T = Σ_{λ_p ≤ σ²ε/T} λ_p + (σ²ε/T) · #{p : λ_p > σ²ε/T}`.
pub fn bt_squared(eigenvalues: &[f64], noise_variance: f64, budget: f64) -> Result<f64> {
    let level = noise_level(budget, noise_variance)?;
    if let Some(pos) = eigenvalues.windows(2).position(|w| w[1] > w[0]) {
        return Err(Error::UnsortedEigenvalues { position: pos + 1 });
    }
    Ok(eigenvalues
        .iter()
        .map(|&l| if l <= level { l } else { level })
        .sum())
}

/// Idealized surrogate `ẑ_T(x) = Σ_p λ_p/(λ_p + σ²ε/T) z_p φ_p(x)`.
#[derive(Debug, Clone)]
pub struct SpectralModel {
    eigensystem: Arc<EigenSystem>,
    noise_level: f64,
    coefficients: Vec<f64>,
    weights: Vec<f64>,
}

impl SpectralModel {
    /// Builds from noisy coefficients `z_p`.
    pub fn from_coefficients(
        eigensystem: Arc<EigenSystem>,
        budget: f64,
        noise_variance: f64,
        coefficients: Vec<f64>,
    ) -> Result<Self> {
        let level = noise_level(budget, noise_variance)?;
        if coefficients.len() != eigensystem.len() {
            return Err(Error::DimensionMismatch {
                expected: eigensystem.len(),
                got: coefficients.len(),
            });
        }
        let weights = eigensystem
            .eigenvalues()
            .iter()
            .zip(&coefficients)
            .map(|(&l, &z)| shrinkage_factor(l, level) * z)
            .collect();
        Ok(Self {
            eigensystem,
            noise_level: level,
            coefficients,
            weights,
        })
    }

    /// Observes known coefficients `f_p` through `z_p = f_p + ε*_p`, `ε*_p ~ N(0, σ²ε/T)`.
    pub fn observe<R: Rng + ?Sized>(
        eigensystem: Arc<EigenSystem>,
        budget: f64,
        noise_variance: f64,
        truth: &[f64],
        rng: &mut R,
    ) -> Result<Self> {
        let level = noise_level(budget, noise_variance)?;
        let sd = level.sqrt();
        let z = truth
            .iter()
            .map(|&f| {
                let e: f64 = rng.sample(StandardNormal);
                f + sd * e
            })
            .collect();
        Self::from_coefficients(eigensystem, budget, noise_variance, z)
    }

    pub fn eigensystem(&self) -> &EigenSystem {
        &self.eigensystem
    }

    /// `σ²ε / T`.
    pub fn noise_level(&self) -> f64 {
        self.noise_level
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Shrunk weights `λ_p/(λ_p + σ²ε/T) z_p`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.eigensystem.combine(&self.weights, x)
    }
}

/// A draw of `f` from the Gaussian-process prior together with the idealized
/// surrogate built from the same draw.
#[derive(Debug, Clone)]
pub struct IdealizedPair {
    truth: Vec<f64>,
    surrogate: SpectralModel,
}

impl IdealizedPair {
    pub fn truth_coefficients(&self) -> &[f64] {
        &self.truth
    }

    pub fn surrogate(&self) -> &SpectralModel {
        &self.surrogate
    }

    /// `f(x) = Σ f_p φ_p(x)`.
    pub fn truth_at(&self, x: &[f64]) -> Result<f64> {
        self.surrogate.eigensystem.combine(&self.truth, x)
    }

    pub fn surrogate_at(&self, x: &[f64]) -> Result<f64> {
        self.surrogate.predict(x)
    }
}

/// Draws `f_p ~ N(0, λ_p)` and `ε*_p ~ N(0, σ²ε/T)` independently.
pub fn sample_idealized_pair<R: Rng + ?Sized>(
    eigensystem: Arc<EigenSystem>,
    budget: f64,
    noise_variance: f64,
    rng: &mut R,
) -> Result<IdealizedPair> {
    noise_level(budget, noise_variance)?;
    let truth: Vec<f64> = eigensystem
        .eigenvalues()
        .iter()
        .map(|&l| {
            let z: f64 = rng.sample(StandardNormal);
            l.sqrt() * z
        })
        .collect();
    let surrogate = SpectralModel::observe(eigensystem, budget, noise_variance, &truth, rng)?;
    Ok(IdealizedPair { truth, surrogate })
}
