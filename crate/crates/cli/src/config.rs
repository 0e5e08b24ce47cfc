//! Run configuration: one JSON file holding every knob of the pipeline.
//!
//! All fields default to the reference hyperparameters, so a minimal config
//! only names paths and a seed. Desk-scale runs override the schedule
//! fields.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wordspot_core::affine::AffineBounds;
use wordspot_core::confidence::ConfidenceMeasure;
use wordspot_core::estimator::{ArchDescriptor, LrSegment, TrainSchedule};
use wordspot_core::phoc::{Alphabet, PhocConfig};
use wordspot_core::synth::StyleFamily;
use wordspot_core::AdaptSchedule;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhocSettings {
    pub levels: Vec<usize>,
    pub overlap_threshold: f64,
}

impl Default for PhocSettings {
    fn default() -> Self {
        Self {
            levels: vec![1, 2, 4, 8],
            overlap_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSettings {
    pub input_h: usize,
    pub input_w: usize,
    pub conv_channels: Vec<usize>,
    pub fc_hidden: usize,
    pub dropout_p: f64,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self {
            input_h: 32,
            input_w: 96,
            conv_channels: vec![8, 16],
            fc_hidden: 256,
            dropout_p: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub segments: Vec<LrSegment>,
    pub batch_size: usize,
    pub weight_decay: f64,
    /// Invert pixel values on load so ink reads as one.
    pub invert: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            segments: vec![
                LrSegment {
                    iterations: 70_000,
                    learning_rate: 1e-4,
                },
                LrSegment {
                    iterations: 10_000,
                    learning_rate: 1e-5,
                },
            ],
            batch_size: 10,
            weight_decay: 5e-5,
            invert: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub style: StyleFamily,
    /// Inline word list; ignored when `words_file` is set.
    pub words: Vec<String>,
    /// One word per line, `#` comments allowed.
    pub words_file: Option<PathBuf>,
    pub per_word: usize,
    /// Random upscale by a factor in [1, 2) per image.
    pub scale_jitter: bool,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            style: StyleFamily::angular_default(),
            words: Vec::new(),
            words_file: None,
            per_word: 10,
            scale_jitter: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptSettings {
    pub cycles: usize,
    pub fraction_early: f64,
    pub fraction_late: f64,
    pub switch_cycle: usize,
    pub augmented_size: usize,
    pub cycle_lr: f64,
    pub epochs_per_cycle: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub measure: ConfidenceMeasure,
    pub mc_passes: usize,
    pub affine: AffineBounds,
}

impl Default for AdaptSettings {
    fn default() -> Self {
        let d = AdaptSchedule::default_with(ConfidenceMeasure::Sigmoid, 0);
        Self {
            cycles: d.cycles,
            fraction_early: d.fraction_early,
            fraction_late: d.fraction_late,
            switch_cycle: d.switch_cycle,
            augmented_size: d.augmented_size,
            cycle_lr: d.cycle_lr,
            epochs_per_cycle: d.epochs_per_cycle,
            batch_size: d.batch_size,
            weight_decay: d.weight_decay,
            measure: d.measure,
            mc_passes: d.mc_passes,
            affine: d.affine,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Labeled synthetic corpus for initial training.
    pub train_manifest: Option<PathBuf>,
    /// Unlabeled (or diagnostically labeled) target corpus.
    pub target_manifest: Option<PathBuf>,
    /// Labeled corpus for retrieval evaluation and spotting galleries.
    pub eval_manifest: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub phoc: PhocSettings,
    pub estimator: EstimatorSettings,
    pub train: TrainSettings,
    pub synth: SynthSettings,
    pub adapt: AdaptSettings,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            phoc: PhocSettings::default(),
            estimator: EstimatorSettings::default(),
            train: TrainSettings::default(),
            synth: SynthSettings::default(),
            adapt: AdaptSettings::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn phoc_config(&self) -> Result<PhocConfig, CliError> {
        PhocConfig::new(
            self.phoc.levels.clone(),
            Alphabet::latin_digits(),
            self.phoc.overlap_threshold,
        )
        .map_err(|e| CliError::Usage(format!("invalid phoc settings: {e}")))
    }

    pub fn arch(&self) -> Result<ArchDescriptor, CliError> {
        let phoc = self.phoc_config()?;
        let desc = ArchDescriptor {
            input_h: self.estimator.input_h,
            input_w: self.estimator.input_w,
            conv_channels: self.estimator.conv_channels.clone(),
            fc_hidden: self.estimator.fc_hidden,
            output_dim: phoc.dim(),
            dropout_p: self.estimator.dropout_p,
        };
        desc.validate()
            .map_err(|e| CliError::Usage(format!("invalid estimator settings: {e}")))?;
        Ok(desc)
    }

    pub fn train_schedule(&self) -> Result<TrainSchedule, CliError> {
        if self.train.segments.is_empty() || self.train.batch_size == 0 {
            return Err(CliError::Usage(
                "train settings need at least one segment and a positive batch size".into(),
            ));
        }
        Ok(TrainSchedule {
            segments: self.train.segments.clone(),
            batch_size: self.train.batch_size,
            weight_decay: self.train.weight_decay,
            seed: self.seed,
        })
    }

    pub fn adapt_schedule(&self, measure: ConfidenceMeasure) -> Result<AdaptSchedule, CliError> {
        let schedule = AdaptSchedule {
            cycles: self.adapt.cycles,
            fraction_early: self.adapt.fraction_early,
            fraction_late: self.adapt.fraction_late,
            switch_cycle: self.adapt.switch_cycle,
            augmented_size: self.adapt.augmented_size,
            cycle_lr: self.adapt.cycle_lr,
            epochs_per_cycle: self.adapt.epochs_per_cycle,
            batch_size: self.adapt.batch_size,
            weight_decay: self.adapt.weight_decay,
            measure,
            mc_passes: self.adapt.mc_passes,
            affine: self.adapt.affine,
            seed: self.seed,
        };
        schedule
            .validate()
            .map_err(|e| CliError::Usage(format!("invalid adapt settings: {e}")))?;
        Ok(schedule)
    }

    /// Path fields are optional in the file; each command asks for the ones
    /// it needs.
    pub fn require(&self, field: &str, value: &Option<PathBuf>) -> Result<PathBuf, CliError> {
        let path = value
            .clone()
            .ok_or_else(|| CliError::Usage(format!("config is missing paths.{field}")))?;
        if !path.exists() {
            return Err(CliError::Usage(format!(
                "paths.{field} does not exist: {}",
                path.display()
            )));
        }
        Ok(path)
    }
}
