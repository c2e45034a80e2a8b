//! Covariance kernels, Gram matrices and Mercer spectral data.

mod bessel;
mod eigen;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{positive, Error, Result};

pub use bessel::bessel_k;
pub use eigen::{AxisSpectrum, EigenSystem, GaussianMeasure, MAX_HERMITE_ORDER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    SquaredExponential,
    TensorisedMatern,
}

/// A stationary covariance kernel with per-axis lengthscales.
///
/// Serialized with the keys `family`, `lengthscales`, `signal_variance`
/// and (Matérn only) `nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

impl KernelSpec {
    pub fn squared_exponential(lengthscales: Vec<f64>, signal_variance: f64) -> Result<Self> {
        let spec = Self {
            family: KernelFamily::SquaredExponential,
            lengthscales,
            signal_variance,
            nu: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn matern(nu: f64, lengthscales: Vec<f64>, signal_variance: f64) -> Result<Self> {
        let spec = Self {
            family: KernelFamily::TensorisedMatern,
            lengthscales,
            signal_variance,
            nu: Some(nu),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.is_empty() {
            return Err(Error::EmptyInput("kernel lengthscales"));
        }
        for &theta in &self.lengthscales {
            positive("lengthscale", theta)?;
        }
        positive("signal_variance", self.signal_variance)?;
        if self.family == KernelFamily::TensorisedMatern {
            match self.nu {
                Some(nu) if nu.is_finite() && nu > 0.5 => {}
                other => {
                    return Err(Error::InvalidParameter {
                        name: "nu",
                        reason: format!("Matérn smoothness must be > 1/2, got {other:?}"),
                    })
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// `k(x, y)`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.validate()?;
        self.check_dim(x)?;
        self.check_dim(y)?;
        Ok(self.eval_unchecked(x, y))
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Kernel value without validation; callers guarantee dimensions and parameters.
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        self.signal_variance * self.correlation_unchecked(x, y)
    }

    /// Unit-variance correlation `k(x, y) / σ²`.
    pub(crate) fn correlation_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.family {
            KernelFamily::SquaredExponential => {
                let q: f64 = x
                    .iter()
                    .zip(y)
                    .zip(&self.lengthscales)
                    .map(|((a, b), t)| {
                        let r = (a - b) / t;
                        r * r
                    })
                    .sum();
                (-0.5 * q).exp()
            }
            KernelFamily::TensorisedMatern => {
                let nu = self.nu.unwrap_or(1.5);
                let log_prefactor = (1.0 - nu) * std::f64::consts::LN_2 - ln_gamma(nu);
                x.iter()
                    .zip(y)
                    .zip(&self.lengthscales)
                    .map(|((a, b), t)| matern_axis(nu, log_prefactor, (a - b).abs() / t))
                    .product()
            }
        }
    }
}

/// One-dimensional Matérn correlation at scaled lag `h = |Δ|/θ`.
fn matern_axis(nu: f64, log_prefactor: f64, h: f64) -> f64 {
    if h == 0.0 {
        return 1.0;
    }
    let arg = (2.0 * nu).sqrt() * h;
    let k = bessel_k(nu, arg);
    if k == 0.0 {
        return 0.0;
    }
    (log_prefactor + nu * arg.ln() + k.ln()).exp()
}

pub fn eval_kernel(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    spec.eval(x, y)
}

/// `K = [k(x_i, x_j)]`.
pub fn gram_matrix(spec: &KernelSpec, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    spec.validate()?;
    if points.is_empty() {
        return Err(Error::EmptyInput("gram matrix points"));
    }
    for p in points {
        spec.check_dim(p)?;
    }
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        k[(j, j)] = spec.signal_variance;
        for i in (j + 1)..n {
            let v = spec.eval_unchecked(&points[i], &points[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// `k(x) = [k(x, x_i)]_i`.
pub(crate) fn cross_covariance(spec: &KernelSpec, points: &[Vec<f64>], x: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        points.len(),
        points.iter().map(|p| spec.eval_unchecked(p, x)),
    )
}

/// Physicists' Hermite polynomial `H_p(t)` by the three-term recurrence.
///
/// Orders above [`MAX_HERMITE_ORDER`] are rejected, and a non-finite result is
/// reported instead of saturating.
pub fn hermite_eval(p: usize, t: f64) -> Result<f64> {
    if p > MAX_HERMITE_ORDER {
        return Err(Error::InvalidParameter {
            name: "hermite order",
            reason: format!("order {p} exceeds the supported maximum {MAX_HERMITE_ORDER}"),
        });
    }
    let mut prev = 1.0;
    if p == 0 {
        return Ok(prev);
    }
    let mut cur = 2.0 * t;
    for k in 1..p {
        let next = 2.0 * t * cur - 2.0 * k as f64 * prev;
        prev = cur;
        cur = next;
    }
    if cur.is_finite() {
        Ok(cur)
    } else {
        Err(Error::HermiteOverflow {
            order: p,
            argument: t,
        })
    }
}

/// Leading-order eigenvalue envelope of the d-tensorised Matérn-ν kernel,
/// `log(1+p)^{2(d-1)(ν+1/2)} · p^{-2(ν+1/2)}`, with unit constant.
pub fn matern_eigenvalue_envelope(nu: f64, d: usize, p: usize) -> Result<f64> {
    if !(nu.is_finite() && nu > 0.5) {
        return Err(Error::InvalidParameter {
            name: "nu",
            reason: format!("must be > 1/2, got {nu}"),
        });
    }
    if d == 0 {
        return Err(Error::InvalidParameter {
            name: "d",
            reason: "dimension must be >= 1".into(),
        });
    }
    if p == 0 {
        return Err(Error::InvalidParameter {
            name: "p",
            reason: "index must be >= 1".into(),
        });
    }
    let pf = p as f64;
    let rate = 2.0 * (nu + 0.5);
    let log_factor = (1.0 + pf).ln().powf((d as f64 - 1.0) * rate);
    Ok(log_factor * pf.powf(-rate))
}
