use serde::{Deserialize, Serialize};

use crate::error::{positive, Error, Result};

/// Replication-averaged observations of a stochastic simulator.
///
/// Each of the `n` design points carries the mean of `r` raw outputs, so the
/// effective observation noise is `σ²ε / r = n σ²ε / T` with `T = n r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    points: Vec<Vec<f64>>,
    observations: Vec<f64>,
    replications: usize,
    noise_variance: f64,
}

impl TrainingSet {
    pub fn new(
        points: Vec<Vec<f64>>,
        observations: Vec<f64>,
        replications: usize,
        noise_variance: f64,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("training points"));
        }
        let d = points[0].len();
        if d == 0 {
            return Err(Error::EmptyInput("training point coordinates"));
        }
        for p in &points {
            if p.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: p.len(),
                });
            }
        }
        if observations.len() != points.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: observations.len(),
            });
        }
        if replications == 0 {
            return Err(Error::InvalidParameter {
                name: "replications",
                reason: "must be >= 1".into(),
            });
        }
        positive("noise_variance", noise_variance)?;
        Ok(Self {
            points,
            observations,
            replications,
            noise_variance,
        })
    }

    pub fn with_noise_variance(mut self, noise_variance: f64) -> Result<Self> {
        positive("noise_variance", noise_variance)?;
        self.noise_variance = noise_variance;
        Ok(self)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    pub fn replications(&self) -> usize {
        self.replications
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Total number of simulator runs `T = n r`.
    pub fn budget(&self) -> usize {
        self.len() * self.replications
    }

    /// Effective per-point noise variance `n σ²ε / T`.
    pub fn nugget(&self) -> f64 {
        self.noise_variance / self.replications as f64
    }
}

/// Averages `r` raw outputs per design point.
pub fn aggregate_replications(
    points: Vec<Vec<f64>>,
    raw: &[Vec<f64>],
    noise_variance: f64,
) -> Result<TrainingSet> {
    if raw.is_empty() {
        return Err(Error::EmptyInput("raw simulator outputs"));
    }
    let r = raw[0].len();
    if r == 0 {
        return Err(Error::EmptyInput("replications per point"));
    }
    for (row, values) in raw.iter().enumerate() {
        if values.len() != r {
            return Err(Error::RaggedRows {
                row,
                expected: r,
                got: values.len(),
            });
        }
    }
    let z = raw
        .iter()
        .map(|row| row.iter().sum::<f64>() / r as f64)
        .collect();
    TrainingSet::new(points, z, r, noise_variance)
}
