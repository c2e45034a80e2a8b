//! CSV training designs and the serializable fitted-model record.
//!
//! A design CSV has a header. Columns `x1..xd` hold the inputs; the outputs
//! are either `rep1..repr` (raw replicated code outputs) or a single `z`
//! column (already averaged over replications).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::surrogate::{aggregate_replications, GpModel, TrainingSet};

#[derive(Debug, Clone, PartialEq)]
pub enum Outputs {
    Replicated(Vec<Vec<f64>>),
    Averaged(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub points: Vec<Vec<f64>>,
    pub outputs: Outputs,
}

impl Design {
    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    /// Pooled within-point sample variance of replicated outputs (`r ≥ 2`).
    pub fn pooled_noise_variance(&self) -> Option<f64> {
        let Outputs::Replicated(raw) = &self.outputs else {
            return None;
        };
        let r = raw.first()?.len();
        if r < 2 {
            return None;
        }
        let total: f64 = raw
            .iter()
            .map(|row| {
                let mean = row.iter().sum::<f64>() / r as f64;
                row.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            })
            .sum();
        Some(total / (raw.len() * (r - 1)) as f64)
    }

    /// Builds the averaged training set. `replications` is required for a
    /// `z` column and must match the column count for `rep` columns.
    pub fn into_training_set(
        self,
        replications: Option<usize>,
        noise_variance: f64,
    ) -> Result<TrainingSet> {
        match self.outputs {
            Outputs::Replicated(raw) => {
                if let Some(r) = replications {
                    let have = raw.first().map_or(0, Vec::len);
                    if r != have {
                        return Err(Error::InvalidParameter {
                            name: "replications",
                            reason: format!("file has {have} replicate columns, got {r}"),
                        });
                    }
                }
                aggregate_replications(self.points, &raw, noise_variance)
            }
            Outputs::Averaged(z) => {
                TrainingSet::new(self.points, z, replications.unwrap_or(1), noise_variance)
            }
        }
    }
}

fn parse_cell(value: &str, row: usize, column: &str) -> Result<f64> {
    value.trim().parse::<f64>().map_err(|_| {
        Error::Config(format!(
            "row {row}, column {column}: cannot parse {value:?} as a number"
        ))
    })
}

pub fn read_design<R: Read>(reader: R) -> Result<Design> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut x_cols = Vec::new();
    let mut rep_cols = Vec::new();
    let mut z_col = None;
    for (i, h) in headers.iter().enumerate() {
        if let Some(k) = h.strip_prefix("rep").and_then(|s| s.parse::<usize>().ok()) {
            rep_cols.push((k, i));
        } else if let Some(k) = h.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
            x_cols.push((k, i));
        } else if h == "z" {
            z_col = Some(i);
        } else {
            return Err(Error::Config(format!("unrecognised column {h:?}")));
        }
    }
    x_cols.sort_unstable();
    rep_cols.sort_unstable();
    if x_cols.is_empty() {
        return Err(Error::Config("no x1..xd input columns".into()));
    }
    if x_cols.iter().enumerate().any(|(i, (k, _))| *k != i + 1) {
        return Err(Error::Config("input columns must be x1..xd without gaps".into()));
    }
    match (z_col.is_some(), rep_cols.is_empty()) {
        (true, false) => {
            return Err(Error::Config(
                "use either a z column or rep1..repr columns, not both".into(),
            ))
        }
        (false, true) => return Err(Error::Config("no output columns (z or rep1..repr)".into())),
        _ => {}
    }

    let mut points = Vec::new();
    let mut raw = Vec::new();
    let mut z = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let x = x_cols
            .iter()
            .map(|&(_, i)| parse_cell(&rec[i], row + 1, &headers[i]))
            .collect::<Result<Vec<_>>>()?;
        points.push(x);
        if let Some(i) = z_col {
            z.push(parse_cell(&rec[i], row + 1, &headers[i])?);
        } else {
            raw.push(
                rep_cols
                    .iter()
                    .map(|&(_, i)| parse_cell(&rec[i], row + 1, &headers[i]))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyInput("design rows"));
    }
    let outputs = if z_col.is_some() {
        Outputs::Averaged(z)
    } else {
        Outputs::Replicated(raw)
    };
    Ok(Design { points, outputs })
}

/// Reads a header-prefixed CSV holding only `x1..xd` columns.
pub fn read_points<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    for (i, h) in headers.iter().enumerate() {
        if h != format!("x{}", i + 1) {
            return Err(Error::Config(format!(
                "expected column x{}, found {h:?}",
                i + 1
            )));
        }
    }
    let mut points = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        points.push(
            rec.iter()
                .enumerate()
                .map(|(i, v)| parse_cell(v, row + 1, &headers[i]))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    if points.is_empty() {
        return Err(Error::EmptyInput("points"));
    }
    Ok(points)
}

/// Writes `x1..xd, rep1..repr` rows with shortest round-trip float formatting.
pub fn write_replicated_design<W: Write>(
    writer: W,
    points: &[Vec<f64>],
    raw: &[Vec<f64>],
) -> Result<()> {
    let d = points.first().map_or(0, Vec::len);
    let r = raw.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<String> = (1..=d)
        .map(|i| format!("x{i}"))
        .chain((1..=r).map(|i| format!("rep{i}")))
        .collect();
    w.write_record(&header)?;
    for (x, reps) in points.iter().zip(raw) {
        w.write_record(x.iter().chain(reps).map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Everything needed to rebuild a fitted BLUP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub kernel: KernelSpec,
    pub noise_variance: f64,
    pub replications: usize,
    pub points: Vec<Vec<f64>>,
    pub observations: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_likelihood: Option<f64>,
}

impl FittedModel {
    pub fn new(data: &TrainingSet, kernel: KernelSpec, log_likelihood: Option<f64>) -> Self {
        Self {
            kernel,
            noise_variance: data.noise_variance(),
            replications: data.replications(),
            points: data.points().to_vec(),
            observations: data.observations().to_vec(),
            log_likelihood,
        }
    }

    pub fn training_set(&self) -> Result<TrainingSet> {
        TrainingSet::new(
            self.points.clone(),
            self.observations.clone(),
            self.replications,
            self.noise_variance,
        )
    }

    pub fn to_gp_model(&self) -> Result<GpModel> {
        self.kernel.validate()?;
        crate::surrogate::fit_blup(&self.training_set()?, &self.kernel)
    }
}
