use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("ragged input: row {row} has {got} entries, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        got: usize,
    },

    #[error(
        "Cholesky factorization failed (n = {n}, nugget = {nugget:.3e}, diagonal ratio estimate = {condition_estimate:.3e})"
    )]
    Factorization {
        n: usize,
        nugget: f64,
        condition_estimate: f64,
    },

    #[error("degenerate function: empirical variance is {variance:.3e}")]
    DegenerateVariance { variance: f64 },

    #[error("degenerate frozen set: {0}")]
    DegenerateFrozenSet(String),

    #[error("eigenvalues are not sorted in nonincreasing order (position {position})")]
    UnsortedEigenvalues { position: usize },

    #[error("Hermite polynomial overflow at order {order}, argument {argument}")]
    HermiteOverflow { order: usize, argument: f64 },

    #[error("logarithm argument {value} is not above 1 in `{context}`")]
    NonpositiveLog { context: &'static str, value: f64 },

    #[error("unsupported kernel family for {0}")]
    UnsupportedKernel(&'static str),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable snake_case tag for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::EmptyInput(_) => "empty_input",
            Error::RaggedRows { .. } => "ragged_rows",
            Error::Factorization { .. } => "factorization",
            Error::DegenerateVariance { .. } => "degenerate_variance",
            Error::DegenerateFrozenSet(_) => "degenerate_frozen_set",
            Error::UnsortedEigenvalues { .. } => "unsorted_eigenvalues",
            Error::HermiteOverflow { .. } => "hermite_overflow",
            Error::NonpositiveLog { .. } => "nonpositive_log",
            Error::UnsupportedKernel(_) => "unsupported_kernel",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be finite and > 0, got {value}"),
        })
    }
}
