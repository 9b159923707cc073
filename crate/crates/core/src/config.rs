//! Run configuration, loadable from a TOML file.
//!
//! ```toml
//! [kmeans]
//! tol = 1e-6        # max center movement at convergence
//! max_iter = 300
//! n_init = 10       # k-means++ restarts, best inertia wins
//!
//! [features]
//! value_weight = 1.0      # scale of the basket value coordinate
//! standardize_rfm = true  # z-score RFM columns before clustering
//!
//! [report]
//! dominance_threshold = 0.30
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans::KMeansConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub n_init: usize,
}

impl Default for KMeansSettings {
    fn default() -> Self {
        let d = KMeansConfig::default();
        Self {
            tol: d.tol,
            max_iter: d.max_iter,
            n_init: d.n_init,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSettings {
    pub value_weight: f64,
    pub standardize_rfm: bool,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        Self {
            value_weight: 1.0,
            standardize_rfm: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSettings {
    pub dominance_threshold: f64,
}

impl Default for ReportSettings {
    fn default() -> Self {
        Self {
            dominance_threshold: 0.30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub kmeans: KMeansSettings,
    pub features: FeatureSettings,
    pub report: ReportSettings,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kmeans.tol.is_nan() || self.kmeans.tol <= 0.0 || self.kmeans.max_iter == 0 || self.kmeans.n_init == 0 {
            return Err(Error::Config("kmeans.tol must be > 0, max_iter and n_init >= 1".into()));
        }
        if !(self.features.value_weight > 0.0 && self.features.value_weight.is_finite()) {
            return Err(Error::Config("features.value_weight must be a positive number".into()));
        }
        if !(0.0..=1.0).contains(&self.report.dominance_threshold) {
            return Err(Error::Config("report.dominance_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn kmeans(&self, k: usize, seed: u64) -> KMeansConfig {
        KMeansConfig {
            k,
            seed,
            max_iter: self.kmeans.max_iter,
            tol: self.kmeans.tol,
            n_init: self.kmeans.n_init,
        }
    }
}
