use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::GeneratorConfig;
use crate::error::{Error, Result};
use crate::finetune::{HeadConfig, TrainSelection};
use crate::qa::{QaConfig, WeightMapConfig};

/// One training configuration of the downstream head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    /// Originals plus augments, augments weighted by the scorer.
    Weighted,
    /// Originals plus augments, all at weight 1.
    Uniform,
    /// Originals only.
    Original,
    /// Augments only, weight 1.
    Augmented,
    /// A fraction of the originals plus all scorer-weighted augments.
    WeightedSubset,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::Weighted => "weighted",
            Arm::Uniform => "uniform",
            Arm::Original => "original",
            Arm::Augmented => "augmented",
            Arm::WeightedSubset => "weighted_subset",
        }
    }

    pub fn uses_weights(self) -> bool {
        matches!(self, Arm::Weighted | Arm::WeightedSubset)
    }

    pub fn selection(self, subset_fraction: f64) -> TrainSelection {
        match self {
            Arm::Weighted | Arm::Uniform => TrainSelection::default(),
            Arm::Original => TrainSelection {
                augmented: false,
                ..TrainSelection::default()
            },
            Arm::Augmented => TrainSelection {
                originals: false,
                ..TrainSelection::default()
            },
            Arm::WeightedSubset => TrainSelection {
                original_fraction: subset_fraction,
                ..TrainSelection::default()
            },
        }
    }
}

/// Everything a pipeline run needs. Read from a JSON document; unknown keys
/// are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seeds: Vec<u64>,
    pub generator: GeneratorConfig,
    /// Fraction of original families held out for evaluation.
    pub holdout_fraction: f64,
    pub qa: QaConfig,
    pub weight_map: WeightMapConfig,
    pub head: HeadConfig,
    pub arms: Vec<Arm>,
    /// Original fraction kept by the `weighted_subset` arm.
    pub subset_fraction: f64,
    /// Where artifacts and the report go; `None` keeps everything in memory.
    pub out_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seeds: vec![1, 2, 3],
            generator: GeneratorConfig::default(),
            holdout_fraction: 0.5,
            qa: QaConfig::default(),
            weight_map: WeightMapConfig::default(),
            head: HeadConfig::default(),
            arms: vec![Arm::Weighted, Arm::Uniform, Arm::Original],
            subset_fraction: 0.1,
            out_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::invalid("config: at least one seed is required"));
        }
        if self.arms.is_empty() {
            return Err(Error::invalid("config: at least one arm is required"));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::invalid("config: holdout_fraction must be in (0, 1)"));
        }
        if !(self.subset_fraction > 0.0 && self.subset_fraction <= 1.0) {
            return Err(Error::invalid("config: subset_fraction must be in (0, 1]"));
        }
        self.generator.validate()?;
        self.qa.validate()?;
        self.weight_map.validate()?;
        self.head.validate()?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}
