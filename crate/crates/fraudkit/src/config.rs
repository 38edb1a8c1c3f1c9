//! TOML experiment configuration.
//!
//! Every run is driven by one file. The master `seed` is the only required
//! key — reproducibility must be explicit, so there is no default seed.

use crate::error::{Error, Result};
use crate::models::{AeConfig, MinnConfig, MlpConfig, TrainConfig};
use crate::synth::SynthConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// Directory holding inpatient.csv, outpatient.csv, providers.csv, leie.csv.
    pub dir: String,
    pub start_year: i32,
    pub years: usize,
    /// Optional LEIE exclusion-date cutoff (YYYY-MM-DD); later exclusions
    /// are ignored when labeling.
    pub label_cutoff: Option<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dir: "data".into(),
            start_year: 2017,
            years: 3,
            label_cutoff: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub ae: AeConfig,
    pub mlp: MlpConfig,
    pub minn: MinnConfig,
    /// Concatenate flattened yearly provider aggregates onto the claim-level
    /// features for the static input.
    pub provider_features: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            ae: AeConfig::default(),
            mlp: MlpConfig::default(),
            minn: MinnConfig::default(),
            provider_features: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub folds: usize,
    pub test_fraction: f64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 10,
            test_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResamplingConfig {
    /// Target positive:negative ratio for random undersampling; `None`
    /// keeps the full training split.
    pub rus_ratio: Option<f64>,
}

impl Default for ResamplingConfig {
    fn default() -> Self {
        Self { rus_ratio: Some(0.1) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Master seed; all randomness in a run derives from it. Required.
    pub seed: u64,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub cv: CvConfig,
    #[serde(default)]
    pub resampling: ResamplingConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        if self.cv.folds < 2 {
            return Err(Error::Config("cv.folds must be at least 2".into()));
        }
        if !(0.0 < self.cv.test_fraction && self.cv.test_fraction < 1.0) {
            return Err(Error::Config("cv.test_fraction must be in (0,1)".into()));
        }
        if let Some(r) = self.resampling.rus_ratio {
            if !(0.0 < r && r <= 1.0) {
                return Err(Error::Config("resampling.rus_ratio must be in (0,1]".into()));
            }
        }
        if let Some(cutoff) = &self.data.label_cutoff {
            chrono::NaiveDate::parse_from_str(cutoff, "%Y-%m-%d")
                .map_err(|e| Error::Config(format!("data.label_cutoff: {e}")))?;
        }
        Ok(())
    }

    /// Stable content hash embedded in checkpoints and reports so artifacts
    /// can be traced back to the exact configuration.
    pub fn content_hash(&self) -> String {
        use sha2::Digest;
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = sha2::Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
