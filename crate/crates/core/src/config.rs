//! TOML configuration with one section per module.
//!
//! ```toml
//! [kernel]
//! family = "squared_exponential"
//! lengthscales = [1.0, 1.0]
//! signal_variance = 1.0
//!
//! [search]
//! n_random = 1000
//! n_local_starts = 10
//! seed = 7
//! box = { signal_variance = [0.0, 10.0], lengthscale = [0.0, 2.0], noise_variance = [0.0, 1.0] }
//!
//! [heat]
//! sigma_g2 = [5.0, 3.0, 2.0, 1.0, 1.0]
//!
//! [coverage]
//! replicates = 200
//! grid = [{ m = 1000, alpha = 0.8 }, { m = 3000, alpha = 1.0 }]
//!
//! [convergence]
//! levels = [50, 200, 800]
//! ```
//!
//! Every section and every key is optional; missing values take defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{ConvergenceConfig, CoverageConfig};
use crate::heat::HeatConfig;
use crate::hyperfit::SearchConfig;
use crate::kernels::KernelSpec;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub kernel: Option<KernelSpec>,
    pub search: SearchConfig,
    pub heat: HeatConfig,
    pub coverage: CoverageConfig,
    pub convergence: ConvergenceConfig,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(k) = &cfg.kernel {
            k.validate()?;
        }
        cfg.heat.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}
