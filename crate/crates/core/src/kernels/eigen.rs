//! Analytic Mercer eigensystem of the squared-exponential kernel under an
//! isotropic Gaussian design measure `N(0, σ_μ² I)`.
//!
//! Per axis `i`, with `a = 1/(4σ_μ²)` and `b_i = 1/(2θ_i²)`:
//!
//! ```text
//!   c_i = sqrt(a² + 2 a b_i),  A_i = a + b_i + c_i,  B_i = b_i / A_i
//!   λ_k = sqrt(2a / A_i) B_i^k
//!   ψ_k(x) = (c_i/a)^{1/4} exp(-(c_i - a) x²) H_k(sqrt(2 c_i) x) / sqrt(2^k k!)
//! ```
//!
//! The d-dimensional operator is a tensor product, so eigenpairs are indexed
//! by multi-indices `p ∈ ℕ^d` with `λ_p = σ² ∏_i λ^{(i)}_{p_i}` and
//! `φ_p = ∏_i ψ^{(i)}_{p_i}`. They are flattened in decreasing eigenvalue
//! order, ties broken by lexicographic multi-index.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{KernelFamily, KernelSpec};
use crate::error::{positive, Error, Result};

/// Largest Hermite order supported, per axis.
pub const MAX_HERMITE_ORDER: usize = 200;

/// Hard cap on the number of flattened eigenpairs.
const MAX_EIGENPAIRS: usize = 500_000;

/// Isotropic Gaussian design measure `N(0, variance · I_dim)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMeasure {
    pub dim: usize,
    pub variance: f64,
}

impl GaussianMeasure {
    pub fn new(dim: usize, variance: f64) -> Result<Self> {
        let m = Self { dim, variance };
        m.validate()?;
        Ok(m)
    }

    pub fn from_std_dev(dim: usize, std_dev: f64) -> Result<Self> {
        Self::new(dim, std_dev * std_dev)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidParameter {
                name: "measure dimension",
                reason: "must be >= 1".into(),
            });
        }
        positive("measure variance", self.variance)
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn sample_coordinate<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.std_dev() * z
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim).map(|_| self.sample_coordinate(rng)).collect()
    }
}

/// One-dimensional spectral constants for a single axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSpectrum {
    pub b: f64,
    pub c: f64,
    pub big_a: f64,
    pub big_b: f64,
    /// `sqrt(2a / A)`, the leading 1-D eigenvalue for unit signal variance.
    pub lead: f64,
    norm: f64,
    sqrt_2c: f64,
    damping: f64,
}

impl AxisSpectrum {
    fn new(a: f64, theta: f64) -> Self {
        let b = 1.0 / (2.0 * theta * theta);
        let c = (a * a + 2.0 * a * b).sqrt();
        let big_a = a + b + c;
        Self {
            b,
            c,
            big_a,
            big_b: b / big_a,
            lead: (2.0 * a / big_a).sqrt(),
            norm: (c / a).powf(0.25),
            sqrt_2c: (2.0 * c).sqrt(),
            damping: c - a,
        }
    }

    /// `λ_k` for unit signal variance.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        self.lead * self.big_b.powi(k as i32)
    }

    /// Fills `out[k] = ψ_k(x)` for `k = 0..out.len()`, normalized in `L²_μ`.
    pub fn fill_functions(&self, x: f64, out: &mut [f64]) {
        if out.is_empty() {
            return;
        }
        let t = self.sqrt_2c * x;
        // The exponential damping is folded into the starting value; the
        // recurrence is linear so later terms inherit it.
        let start = self.norm * (-self.damping * x * x).exp();
        out[0] = start;
        if out.len() == 1 {
            return;
        }
        out[1] = std::f64::consts::SQRT_2 * t * start;
        for k in 1..out.len() - 1 {
            let kf = k as f64;
            out[k + 1] = (2.0 / (kf + 1.0)).sqrt() * t * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Candidate {
    value: f64,
    index: Vec<usize>,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Truncated Mercer eigensystem. Immutable once built.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    signal_variance: f64,
    a: f64,
    axes: Vec<AxisSpectrum>,
    indices: Vec<Vec<usize>>,
    eigenvalues: Vec<f64>,
    max_degree: Vec<usize>,
}

enum Stop {
    Count(usize),
    Tail(f64),
}

impl EigenSystem {
    /// The `size` largest eigenpairs.
    pub fn gaussian_measure(
        spec: &KernelSpec,
        measure: &GaussianMeasure,
        size: usize,
    ) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidParameter {
                name: "truncation size",
                reason: "must be >= 1".into(),
            });
        }
        Self::build(spec, measure, Stop::Count(size))
    }

    /// The shortest leading block whose omitted trace is at most `rel_tol · σ²`.
    pub fn with_tail_tolerance(
        spec: &KernelSpec,
        measure: &GaussianMeasure,
        rel_tol: f64,
    ) -> Result<Self> {
        positive("tail tolerance", rel_tol)?;
        Self::build(spec, measure, Stop::Tail(rel_tol))
    }

    fn build(spec: &KernelSpec, measure: &GaussianMeasure, stop: Stop) -> Result<Self> {
        spec.validate()?;
        measure.validate()?;
        if spec.family != KernelFamily::SquaredExponential {
            return Err(Error::UnsupportedKernel(
                "the analytic Gaussian-measure eigensystem (squared-exponential only)",
            ));
        }
        if spec.dim() != measure.dim {
            return Err(Error::DimensionMismatch {
                expected: measure.dim,
                got: spec.dim(),
            });
        }
        let d = measure.dim;
        let a = 1.0 / (4.0 * measure.variance);
        let axes: Vec<AxisSpectrum> = spec
            .lengthscales
            .iter()
            .map(|&theta| AxisSpectrum::new(a, theta))
            .collect();

        let unit_value =
            |idx: &[usize]| -> f64 { idx.iter().zip(&axes).map(|(&k, ax)| ax.eigenvalue(k)).product() };

        let mut heap = BinaryHeap::new();
        let mut seen = HashSet::new();
        let origin = vec![0usize; d];
        heap.push(Candidate {
            value: unit_value(&origin),
            index: origin.clone(),
        });
        seen.insert(origin);

        let mut indices = Vec::new();
        let mut unit_eigs = Vec::new();
        let mut captured = 0.0;
        let mut compensation = 0.0;
        while let Some(next) = heap.pop() {
            let done = match stop {
                Stop::Count(n) => indices.len() >= n,
                Stop::Tail(tol) => 1.0 - captured <= tol,
            };
            if done {
                break;
            }
            if indices.len() >= MAX_EIGENPAIRS {
                return Err(Error::InvalidParameter {
                    name: "truncation",
                    reason: format!("more than {MAX_EIGENPAIRS} eigenpairs requested"),
                });
            }
            if next.index.iter().any(|&k| k > MAX_HERMITE_ORDER) {
                return Err(Error::InvalidParameter {
                    name: "truncation",
                    reason: format!("per-axis order would exceed {MAX_HERMITE_ORDER}"),
                });
            }
            // Kahan summation keeps the captured trace exact enough for 1e-12 tails.
            let y = next.value - compensation;
            let t = captured + y;
            compensation = (t - captured) - y;
            captured = t;

            for axis in 0..d {
                let mut succ = next.index.clone();
                succ[axis] += 1;
                if seen.insert(succ.clone()) {
                    heap.push(Candidate {
                        value: unit_value(&succ),
                        index: succ,
                    });
                }
            }
            unit_eigs.push(next.value);
            indices.push(next.index);
        }

        let mut max_degree = vec![0usize; d];
        for idx in &indices {
            for (m, &k) in max_degree.iter_mut().zip(idx) {
                *m = (*m).max(k);
            }
        }
        let eigenvalues = unit_eigs
            .into_iter()
            .map(|v| spec.signal_variance * v)
            .collect();
        Ok(Self {
            signal_variance: spec.signal_variance,
            a,
            axes,
            indices,
            eigenvalues,
            max_degree,
        })
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn multi_index(&self, p: usize) -> &[usize] {
        &self.indices[p]
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_variance
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn axes(&self) -> &[AxisSpectrum] {
        &self.axes
    }

    /// `ξ_d = Σ_i log(1/B_i)`.
    pub fn xi(&self) -> f64 {
        self.axes.iter().map(|ax| (1.0 / ax.big_b).ln()).sum()
    }

    /// Trace not captured by the truncation, `σ² - Σ_{p<P} λ_p` (Mercer trace is σ²).
    pub fn tail_mass(&self) -> f64 {
        let captured: f64 = self.eigenvalues.iter().sum();
        (self.signal_variance - captured).max(0.0)
    }

    /// Geometric bound on the omitted trace when `d = 1`: `λ_P / (1 - B)`.
    pub fn geometric_tail_bound(&self) -> f64 {
        let bmax = self
            .axes
            .iter()
            .map(|ax| ax.big_b)
            .fold(0.0_f64, f64::max);
        let next = self.eigenvalues.last().copied().unwrap_or(self.signal_variance) * bmax;
        next / (1.0 - bmax)
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn axis_tables(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.axes
            .iter()
            .zip(x)
            .zip(&self.max_degree)
            .map(|((ax, &xi), &deg)| {
                let mut row = vec![0.0; deg + 1];
                ax.fill_functions(xi, &mut row);
                row
            })
            .collect()
    }

    /// `φ_p(x)` for every retained `p`, in flattened order.
    pub fn eval_all(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let tables = self.axis_tables(x);
        Ok(self
            .indices
            .iter()
            .map(|idx| idx.iter().zip(&tables).map(|(&k, row)| row[k]).product())
            .collect())
    }

    /// Single eigenfunction `φ_p(x)`.
    pub fn eigenfunction(&self, p: usize, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let idx = self.indices.get(p).ok_or(Error::InvalidParameter {
            name: "eigen index",
            reason: format!("{p} is beyond the truncation size {}", self.len()),
        })?;
        Ok(self
            .axes
            .iter()
            .zip(idx)
            .zip(x)
            .map(|((ax, &k), &xi)| {
                let mut row = vec![0.0; k + 1];
                ax.fill_functions(xi, &mut row);
                row[k]
            })
            .product())
    }

    /// `Σ_p w_p φ_p(x)`.
    pub fn combine(&self, weights: &[f64], x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        if weights.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: weights.len(),
            });
        }
        let tables = self.axis_tables(x);
        Ok(self
            .indices
            .iter()
            .zip(weights)
            .map(|(idx, w)| w * idx.iter().zip(&tables).map(|(&k, row)| row[k]).product::<f64>())
            .sum())
    }

    /// `Σ_p c_p φ_p(x)²`.
    pub fn weighted_square_sum(&self, coefficients: &[f64], x: &[f64]) -> Result<f64> {
        let phis = self.eval_all(x)?;
        if coefficients.len() != phis.len() {
            return Err(Error::DimensionMismatch {
                expected: phis.len(),
                got: coefficients.len(),
            });
        }
        Ok(phis.iter().zip(coefficients).map(|(f, c)| c * f * f).sum())
    }

    /// Coefficients `f_p = ∫ f φ_p dμ` of a separable `f(x) = ∏_i g_i(x_i)`,
    /// computed axis by axis with a Gauss–Hermite rule.
    pub fn project_separable<G>(
        &self,
        measure: &GaussianMeasure,
        rule: &crate::quadrature::GaussHermite,
        factors: G,
    ) -> Result<Vec<f64>>
    where
        G: Fn(usize, f64) -> f64,
    {
        if measure.dim != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: measure.dim,
            });
        }
        let sigma = measure.std_dev();
        let per_axis: Vec<Vec<f64>> = self
            .axes
            .iter()
            .enumerate()
            .map(|(axis, ax)| {
                let deg = self.max_degree[axis];
                let mut acc = vec![0.0; deg + 1];
                let mut row = vec![0.0; deg + 1];
                for (&y, &w) in rule.nodes().iter().zip(rule.weights()) {
                    let x = std::f64::consts::SQRT_2 * sigma * y;
                    ax.fill_functions(x, &mut row);
                    let g = factors(axis, x);
                    for (a, r) in acc.iter_mut().zip(&row) {
                        *a += w * g * r;
                    }
                }
                let scale = 1.0 / std::f64::consts::PI.sqrt();
                acc.iter_mut().for_each(|a| *a *= scale);
                acc
            })
            .collect();
        Ok(self
            .indices
            .iter()
            .map(|idx| idx.iter().zip(&per_axis).map(|(&k, c)| c[k]).product())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussHermite;

    fn system_1d(size: usize) -> (EigenSystem, KernelSpec, GaussianMeasure) {
        let spec = KernelSpec::squared_exponential(vec![0.8], 1.3).unwrap();
        let measure = GaussianMeasure::from_std_dev(1, 1.0).unwrap();
        (
            EigenSystem::gaussian_measure(&spec, &measure, size).unwrap(),
            spec,
            measure,
        )
    }

    #[test]
    fn spectrum_is_sorted_and_bounded_by_trace() {
        let (eig, spec, _) = system_1d(40);
        assert!(eig.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
        let sum: f64 = eig.eigenvalues().iter().sum();
        assert!(sum <= spec.signal_variance * (1.0 + 1e-14));
        for ax in eig.axes() {
            assert!(ax.big_b > 0.0 && ax.big_b < 1.0);
        }
    }

    #[test]
    fn partial_trace_converges_within_geometric_bound() {
        let (eig, spec, _) = system_1d(80);
        let gap = spec.signal_variance - eig.eigenvalues().iter().sum::<f64>();
        assert!(gap.abs() < eig.geometric_tail_bound() + 1e-15);
        let (small, _, _) = system_1d(5);
        assert!(small.tail_mass() > eig.tail_mass());
    }

    #[test]
    fn tail_tolerance_controls_truncation() {
        let spec = KernelSpec::squared_exponential(vec![1.0, 0.6], 1.46).unwrap();
        let measure = GaussianMeasure::from_std_dev(2, 2.0).unwrap();
        let eig = EigenSystem::with_tail_tolerance(&spec, &measure, 1e-10).unwrap();
        assert!(eig.tail_mass() <= 1e-10 * 1.46 + 1e-15);
        assert!(eig.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn multi_index_tie_break_is_lexicographic() {
        let spec = KernelSpec::squared_exponential(vec![1.0, 1.0], 1.0).unwrap();
        let measure = GaussianMeasure::new(2, 1.0).unwrap();
        let eig = EigenSystem::gaussian_measure(&spec, &measure, 3).unwrap();
        assert_eq!(eig.multi_index(0), &[0, 0]);
        assert_eq!(eig.multi_index(1), &[0, 1]);
        assert_eq!(eig.multi_index(2), &[1, 0]);
    }

    #[test]
    fn orthonormal_under_measure() {
        let (eig, _, measure) = system_1d(12);
        let rule = GaussHermite::new(96).unwrap();
        for p in 0..12 {
            for q in 0..12 {
                let v = rule.gaussian_expectation(measure.std_dev(), |x| {
                    eig.eigenfunction(p, &[x]).unwrap() * eig.eigenfunction(q, &[x]).unwrap()
                });
                let target = if p == q { 1.0 } else { 0.0 };
                assert!((v - target).abs() < 1e-8, "p={p} q={q} v={v}");
            }
        }
    }

    #[test]
    fn rejects_matern_and_bad_sizes() {
        let spec = KernelSpec::matern(1.5, vec![1.0], 1.0).unwrap();
        let measure = GaussianMeasure::new(1, 1.0).unwrap();
        assert!(EigenSystem::gaussian_measure(&spec, &measure, 4).is_err());
        let se = KernelSpec::squared_exponential(vec![1.0], 1.0).unwrap();
        assert!(EigenSystem::gaussian_measure(&se, &measure, 0).is_err());
    }

    #[test]
    fn eval_all_matches_single_evaluations() {
        let spec = KernelSpec::squared_exponential(vec![0.7, 1.2], 1.0).unwrap();
        let measure = GaussianMeasure::new(2, 1.5).unwrap();
        let eig = EigenSystem::gaussian_measure(&spec, &measure, 30).unwrap();
        let x = [0.4, -1.1];
        let all = eig.eval_all(&x).unwrap();
        for (p, v) in all.iter().enumerate() {
            assert!((v - eig.eigenfunction(p, &x).unwrap()).abs() < 1e-14);
        }
    }
}
