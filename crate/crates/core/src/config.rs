//! Experiment configuration, read from and written to JSON.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::stats::DEFAULT_CONFIDENCE;

/// Smallest batch accepted for either pass.
pub const MIN_PATHS: usize = 100;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Directory receiving the per-n table and the summary.
    pub path: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            path: PathBuf::from("out"),
            format: OutputFormat::Csv,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kernel: KernelSpec,
    /// Path lengths, strictly increasing.
    pub n_grid: Vec<usize>,
    /// Paths per grid point for the main pass.
    pub m: usize,
    /// Paths for the independent `s²` pass; defaults to `m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_s2: Option<usize>,
    pub p_values: Vec<f64>,
    pub seed: u64,
    /// DKW `δ`.
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default)]
    pub output: OutputSpec,
    /// Worker threads; `None` uses every available core. Results do not
    /// depend on it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

fn default_confidence() -> f64 {
    DEFAULT_CONFIDENCE
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kernel: KernelSpec::banded(0.75),
            n_grid: (8..=16).map(|k| 1usize << k).collect(),
            m: 100_000,
            m_s2: None,
            p_values: vec![1.0, 2.0],
            seed: 1,
            confidence: DEFAULT_CONFIDENCE,
            output: OutputSpec::default(),
            threads: None,
        }
    }
}

fn field(name: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        field: name.to_string(),
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    pub fn m_s2(&self) -> usize {
        self.m_s2.unwrap_or(self.m)
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel
            .validate()
            .map_err(|e| field("kernel", e.to_string()))?;
        if self.n_grid.is_empty() {
            return Err(field("n_grid", "must not be empty"));
        }
        if self.n_grid[0] < 2 {
            return Err(field("n_grid", "every n must be at least 2"));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(field("n_grid", "must be strictly increasing"));
        }
        if self.m < MIN_PATHS {
            return Err(field("m", format!("must be at least {MIN_PATHS}")));
        }
        if self.m_s2() < MIN_PATHS {
            return Err(field("m_s2", format!("must be at least {MIN_PATHS}")));
        }
        if self.p_values.is_empty() {
            return Err(field("p_values", "must not be empty"));
        }
        if self.p_values.iter().any(|&p| !(p >= 1.0) || !p.is_finite()) {
            return Err(field("p_values", "every p must be a finite real >= 1"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(field("confidence", "must lie in (0, 1)"));
        }
        if self.threads == Some(0) {
            return Err(field("threads", "must be positive"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| field("<document>", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
