use crate::augment::AugmentConfig;
use crate::centerline::ExtractParams;
use crate::error::{Error, Result};
use crate::imagecore::PixelSpacing;
use crate::nn::{ModelConfig, SgdConfig};
use crate::synthgen::SynthConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Turns on-the-fly augmentation on or off.
    pub augment: bool,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { epochs: 100, batch_size: 4, augment: true, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    /// Threshold of the percent-under-threshold statistic, in millimeters.
    pub threshold_mm: f64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self { threshold_mm: 1.0 }
    }
}

/// Default locations used when a command is given no explicit path.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub data_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

/// Everything a command can be configured with. Every field has a default,
/// so `{}` is a valid configuration; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub optimizer: SgdConfig,
    pub augment: AugmentConfig,
    pub training: TrainingConfig,
    pub extract: ExtractParams,
    pub synth: SynthConfig,
    pub pixel_spacing: PixelSpacing,
    pub evaluate: EvaluateConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            optimizer: SgdConfig::default(),
            augment: AugmentConfig::default(),
            training: TrainingConfig::default(),
            extract: ExtractParams::default(),
            synth: SynthConfig::default(),
            pixel_spacing: PixelSpacing::default(),
            evaluate: EvaluateConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.optimizer.validate()?;
        self.augment.validate()?;
        self.extract.validate()?;
        self.synth.validate()?;
        PixelSpacing::new(self.pixel_spacing.mm_per_pixel())?;
        if self.training.batch_size == 0 {
            return Err(Error::InvalidArgument("training.batch_size must be positive".into()));
        }
        if !(self.evaluate.threshold_mm.is_finite() && self.evaluate.threshold_mm > 0.0) {
            return Err(Error::InvalidArgument("evaluate.threshold_mm must be positive".into()));
        }
        Ok(())
    }
}
