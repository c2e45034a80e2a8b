//! The finite-data BLUP with replication-averaged observations, and the
//! idealized spectral surrogate built on a Mercer eigensystem.

mod blup;
mod spectral;
mod training;

pub use blup::{fit_blup, GpModel, Prediction, CONDITION_WARNING};
pub use spectral::{
    bt_squared, imse, imse_from_eigenvalues, sample_idealized_pair, shrinkage_factor,
    spectral_mse, IdealizedPair, SpectralModel, Truncated,
};
pub use training::{aggregate_replications, TrainingSet};
