//! Pick-freeze estimation of first-order (closed) Sobol indices with the
//! delta-method asymptotic variance and normal confidence intervals.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::kernels::GaussianMeasure;

/// Nonempty strict subset of the input coordinates, 0-based and sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrozenSet {
    dim: usize,
    indices: Vec<usize>,
}

impl FrozenSet {
    pub fn new(dim: usize, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() {
            return Err(Error::DegenerateFrozenSet("frozen set is empty".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&j| j >= dim) {
            return Err(Error::DegenerateFrozenSet(format!(
                "coordinate {bad} out of range for dimension {dim}"
            )));
        }
        if indices.len() == dim {
            return Err(Error::DegenerateFrozenSet(
                "frozen set covers every coordinate".into(),
            ));
        }
        Ok(Self { dim, indices })
    }

    /// Parses 1-based coordinates, as used on the command line.
    pub fn from_one_based(dim: usize, coords: &[usize]) -> Result<Self> {
        if let Some(&bad) = coords.iter().find(|&&j| j == 0 || j > dim) {
            return Err(Error::DegenerateFrozenSet(format!(
                "coordinate {bad} is outside 1..={dim}"
            )));
        }
        Self::new(dim, coords.iter().map(|j| j - 1).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, j: usize) -> bool {
        self.indices.binary_search(&j).is_ok()
    }
}

/// `m` pairs `(X_i, X̃_i)` sharing the frozen coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PickFreezeSample {
    pub frozen: FrozenSet,
    pub x: Vec<Vec<f64>>,
    pub x_tilde: Vec<Vec<f64>>,
}

impl PickFreezeSample {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Same pairs with the roles of `X` and `X̃` exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            frozen: self.frozen.clone(),
            x: self.x_tilde.clone(),
            x_tilde: self.x.clone(),
        }
    }
}

pub fn pick_freeze_sample<R: Rng + ?Sized>(
    measure: &GaussianMeasure,
    frozen: &FrozenSet,
    m: usize,
    rng: &mut R,
) -> Result<PickFreezeSample> {
    measure.validate()?;
    if frozen.dim() != measure.dim {
        return Err(Error::DimensionMismatch {
            expected: measure.dim,
            got: frozen.dim(),
        });
    }
    if m < 2 {
        return Err(Error::InvalidParameter {
            name: "m",
            reason: format!("need at least 2 pairs, got {m}"),
        });
    }
    let d = measure.dim;
    let mut x = Vec::with_capacity(m);
    let mut x_tilde = Vec::with_capacity(m);
    for _ in 0..m {
        let xi = measure.sample(rng);
        let xt = (0..d)
            .map(|j| {
                if frozen.contains(j) {
                    xi[j]
                } else {
                    measure.sample_coordinate(rng)
                }
            })
            .collect();
        x.push(xi);
        x_tilde.push(xt);
    }
    Ok(PickFreezeSample {
        frozen: frozen.clone(),
        x,
        x_tilde,
    })
}

/// What produced the function values behind an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorKind {
    Exact,
    Surrogate,
    Code,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolEstimate {
    pub index: f64,
    pub variance: f64,
    pub m: usize,
    pub budget: Option<f64>,
    pub evaluator: EvaluatorKind,
}

impl SobolEstimate {
    pub fn with_budget(mut self, budget: f64) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn confidence_interval(&self, level: f64) -> Result<(f64, f64)> {
        confidence_interval(self, level)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Centered moments of the estimator: `(Ê, V̂, Ŝ)`.
///
/// `m⁻¹Σ yỹ − m⁻²ΣΣ y_i ỹ_j` equals `m⁻¹Σ (y − ȳ)(ỹ − ỹ̄)`, and the latter is
/// evaluated because it does not cancel catastrophically.
fn index_parts(y: &[f64], y_tilde: &[f64]) -> Result<(f64, f64, f64)> {
    if y.len() != y_tilde.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: y_tilde.len(),
        });
    }
    if y.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "m",
            reason: format!("need at least 2 pairs, got {}", y.len()),
        });
    }
    if let Some(bad) = y.iter().chain(y_tilde).find(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "evaluations",
            reason: format!("non-finite function value {bad}"),
        });
    }
    let e = mean(y);
    let et = mean(y_tilde);
    let v = y.iter().map(|a| (a - e) * (a - e)).sum::<f64>() / y.len() as f64;
    // Relative floor keeps floating-point noise on constants from passing as variance.
    let scale = y.iter().map(|a| a * a).sum::<f64>() / y.len() as f64;
    if !(v > 1e-28 * scale) || v == 0.0 {
        return Err(Error::DegenerateVariance { variance: v });
    }
    let cov = y
        .iter()
        .zip(y_tilde)
        .map(|(a, b)| (a - e) * (b - et))
        .sum::<f64>()
        / y.len() as f64;
    Ok((e, v, cov / v))
}

/// Plug-in delta-method variance of `√m (Ŝ − S)`: the sample variance of
/// `W_i = (y_i − Ê)(ỹ_i − Ê − Ŝ(y_i − Ê))` divided by `V̂²`.
pub fn asymptotic_variance(y: &[f64], y_tilde: &[f64], index: f64) -> Result<f64> {
    let (e, v, _) = index_parts(y, y_tilde)?;
    Ok(plug_in(y, y_tilde, e, v, index))
}

fn plug_in(y: &[f64], y_tilde: &[f64], e: f64, v: f64, s: f64) -> f64 {
    let w: Vec<f64> = y
        .iter()
        .zip(y_tilde)
        .map(|(a, b)| {
            let c = a - e;
            c * (b - e - s * c)
        })
        .collect();
    let wm = mean(&w);
    let var = w.iter().map(|x| (x - wm) * (x - wm)).sum::<f64>() / (w.len() - 1) as f64;
    var / (v * v)
}

/// Estimate from precomputed values `y_i = f(X_i)`, `ỹ_i = f(X̃_i)`.
pub fn estimate_from_evaluations(
    y: &[f64],
    y_tilde: &[f64],
    evaluator: EvaluatorKind,
) -> Result<SobolEstimate> {
    let (e, v, s) = index_parts(y, y_tilde)?;
    Ok(SobolEstimate {
        index: s,
        variance: plug_in(y, y_tilde, e, v, s),
        m: y.len(),
        budget: None,
        evaluator,
    })
}

/// Evaluates `f` on both halves of the sample and returns the estimate.
pub fn estimate_sobol<F>(
    mut f: F,
    sample: &PickFreezeSample,
    evaluator: EvaluatorKind,
) -> Result<SobolEstimate>
where
    F: FnMut(&[f64]) -> f64,
{
    let y: Vec<f64> = sample.x.iter().map(|x| f(x)).collect();
    let yt: Vec<f64> = sample.x_tilde.iter().map(|x| f(x)).collect();
    estimate_from_evaluations(&y, &yt, evaluator)
}

/// Fallible evaluator variant; the first error aborts the estimate.
pub fn try_estimate_sobol<F>(
    mut f: F,
    sample: &PickFreezeSample,
    evaluator: EvaluatorKind,
) -> Result<SobolEstimate>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let y = sample.x.iter().map(|x| f(x)).collect::<Result<Vec<_>>>()?;
    let yt = sample.x_tilde.iter().map(|x| f(x)).collect::<Result<Vec<_>>>()?;
    estimate_from_evaluations(&y, &yt, evaluator)
}

/// Two-sided normal quantile `q_{1−(1−β)/2}`.
pub fn normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter {
            name: "level",
            reason: format!("must lie in (0, 1), got {level}"),
        });
    }
    let n = Normal::standard();
    Ok(n.inverse_cdf(1.0 - (1.0 - level) / 2.0))
}

/// `Ŝ ± q · sqrt(variance / m)`.
pub fn confidence_interval(est: &SobolEstimate, level: f64) -> Result<(f64, f64)> {
    let q = normal_quantile(level)?;
    if !(est.variance >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "variance",
            reason: format!("must be nonnegative, got {}", est.variance),
        });
    }
    let half = q * (est.variance / est.m as f64).sqrt();
    Ok((est.index - half, est.index + half))
}
