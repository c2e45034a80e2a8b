use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::TrainingSet;
use crate::error::{positive, Error, Result};
use crate::kernels::{cross_covariance, gram_matrix, KernelSpec};

/// Threshold on the condition estimate above which fitting logs a warning.
pub const CONDITION_WARNING: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub mse: f64,
}

/// Fitted BLUP state: Cholesky factor of `K + nugget·I` and weights
/// `α = (K + nugget·I)⁻¹ z`.
#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: KernelSpec,
    points: Vec<Vec<f64>>,
    factor: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    nugget: f64,
    condition_estimate: f64,
}

pub fn fit_blup(data: &TrainingSet, kernel: &KernelSpec) -> Result<GpModel> {
    GpModel::from_parts(
        kernel.clone(),
        data.points().to_vec(),
        data.observations(),
        data.nugget(),
    )
}

impl GpModel {
    /// Fits with an explicit nugget, for callers that fix `n σ²ε / T` directly.
    pub fn from_parts(
        kernel: KernelSpec,
        points: Vec<Vec<f64>>,
        observations: &[f64],
        nugget: f64,
    ) -> Result<Self> {
        positive("nugget", nugget)?;
        if observations.len() != points.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: observations.len(),
            });
        }
        let n = points.len();
        let mut k = gram_matrix(&kernel, &points)?;
        for i in 0..n {
            k[(i, i)] += nugget;
        }
        let factor = k.cholesky().ok_or(Error::Factorization {
            n,
            nugget,
            condition_estimate: f64::INFINITY,
        })?;
        let condition_estimate = diagonal_condition_estimate(factor.l_dirty());
        if condition_estimate > CONDITION_WARNING {
            log::warn!(
                "regularized Gram matrix is ill-conditioned: estimate {condition_estimate:.3e} (n = {n}, nugget = {nugget:.3e})"
            );
        }
        let z = DVector::from_column_slice(observations);
        let alpha = factor.solve(&z);
        Ok(Self {
            kernel,
            points,
            factor,
            alpha,
            nugget,
            condition_estimate,
        })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    pub fn weights(&self) -> &[f64] {
        self.alpha.as_slice()
    }

    /// Lower bound on the 2-norm condition number from the Cholesky diagonal.
    pub fn condition_estimate(&self) -> f64 {
        self.condition_estimate
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    /// Mean `k(x)ᵀα` and MSE `k(x,x) - k(x)ᵀ(K + nugget·I)⁻¹k(x)`.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        self.kernel.check_dim(x)?;
        let kx = cross_covariance(&self.kernel, &self.points, x);
        let mean = kx.dot(&self.alpha);
        let prior = self.kernel.signal_variance;
        let mut v = kx;
        self.factor.l_dirty().solve_lower_triangular_mut(&mut v);
        let mse = (prior - v.norm_squared()).clamp(0.0, prior);
        Ok(Prediction { mean, mse })
    }

    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        self.kernel.check_dim(x)?;
        Ok(cross_covariance(&self.kernel, &self.points, x).dot(&self.alpha))
    }
}

fn diagonal_condition_estimate(l: &DMatrix<f64>) -> f64 {
    let (lo, hi) = l
        .diagonal()
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &v| (lo.min(v.abs()), hi.max(v.abs())));
    (hi / lo).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct evaluation with an explicit inverse, independent of the Cholesky path.
    fn dense_oracle(
        kernel: &KernelSpec,
        points: &[Vec<f64>],
        z: &[f64],
        nugget: f64,
        x: &[f64],
    ) -> (f64, f64) {
        let n = points.len();
        let mut k = DMatrix::from_fn(n, n, |i, j| kernel.eval(&points[i], &points[j]).unwrap());
        for i in 0..n {
            k[(i, i)] += nugget;
        }
        let inv = k.try_inverse().unwrap();
        let kx = DVector::from_fn(n, |i, _| kernel.eval(x, &points[i]).unwrap());
        let zv = DVector::from_column_slice(z);
        let mean = (kx.transpose() * &inv * zv)[(0, 0)];
        let mse = kernel.eval(x, x).unwrap() - (kx.transpose() * inv * &kx)[(0, 0)];
        (mean, mse)
    }

    #[test]
    fn single_point_is_scalar_shrinkage() {
        let kernel = KernelSpec::squared_exponential(vec![1.0], 2.0).unwrap();
        let data = TrainingSet::new(vec![vec![0.5]], vec![3.0], 4, 1.0).unwrap();
        let model = fit_blup(&data, &kernel).unwrap();
        let p = model.predict(&[0.5]).unwrap();
        let expected = 2.0 / (2.0 + 0.25) * 3.0;
        assert!((p.mean - expected).abs() < 1e-14);
    }

    #[test]
    fn zero_observations_give_zero_predictor() {
        let kernel = KernelSpec::squared_exponential(vec![0.7], 1.0).unwrap();
        let data =
            TrainingSet::new(vec![vec![0.0], vec![1.0], vec![2.0]], vec![0.0; 3], 1, 0.1).unwrap();
        let model = fit_blup(&data, &kernel).unwrap();
        assert!(model.weights().iter().all(|&a| a == 0.0));
        assert_eq!(model.predict(&[0.4]).unwrap().mean, 0.0);
    }

    #[test]
    fn far_away_reverts_to_prior() {
        let kernel = KernelSpec::squared_exponential(vec![0.5], 1.7).unwrap();
        let data =
            TrainingSet::new(vec![vec![0.0], vec![0.3]], vec![1.0, -2.0], 1, 0.05).unwrap();
        let model = fit_blup(&data, &kernel).unwrap();
        let p = model.predict(&[100.0]).unwrap();
        assert!(p.mean.abs() < 1e-300);
        assert_eq!(p.mse, 1.7);
    }

    #[test]
    fn small_nugget_interpolates() {
        let kernel = KernelSpec::squared_exponential(vec![1.0], 1.0).unwrap();
        let pts = vec![vec![-1.0], vec![0.2], vec![1.5]];
        let z = vec![0.3, -0.8, 1.1];
        let model = GpModel::from_parts(kernel, pts.clone(), &z, 1e-10).unwrap();
        for (p, zi) in pts.iter().zip(&z) {
            let pred = model.predict(p).unwrap();
            assert!((pred.mean - zi).abs() < 1e-7);
            assert!(pred.mse < 1e-8);
        }
    }

    #[test]
    fn matches_dense_inverse_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..10 {
            let n = 5 + trial * 4;
            let d = 1 + trial % 3;
            let kernel = if trial % 2 == 0 {
                KernelSpec::squared_exponential(vec![0.8; d], 1.3).unwrap()
            } else {
                KernelSpec::matern(2.5, vec![0.8; d], 1.3).unwrap()
            };
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let data = TrainingSet::new(pts.clone(), z.clone(), 2, 0.3).unwrap();
            let model = fit_blup(&data, &kernel).unwrap();
            for _ in 0..5 {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.5..2.5)).collect();
                let (m_ref, s_ref) = dense_oracle(&kernel, &pts, &z, 0.15, &x);
                let p = model.predict(&x).unwrap();
                assert!((p.mean - m_ref).abs() <= 1e-10 * m_ref.abs().max(1.0));
                assert!((p.mse - s_ref).abs() <= 1e-10 * s_ref.abs().max(1.0));
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let kernel = KernelSpec::squared_exponential(vec![1.0, 1.0], 1.0).unwrap();
        let data = TrainingSet::new(vec![vec![0.0]], vec![1.0], 1, 1.0).unwrap();
        assert!(fit_blup(&data, &kernel).is_err());
    }
}
