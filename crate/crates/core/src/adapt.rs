//! Confidence-gated self-training.
//!
//! Each cycle: estimate attribute vectors for the whole unlabeled corpus,
//! score them with the configured confidence measure, keep the top fraction,
//! pseudo-label those by lexicon recognition (the training target is the
//! lexicon entry's embedding, never the estimate), balance and augment, and
//! retrain. Pseudo-labels are regenerated from scratch every cycle.

use std::collections::{BTreeSet, HashMap};
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affine::AffineBounds;
use crate::confidence::{
    conf_entropy, conf_mc_dropout, conf_oracle, conf_sigmoid, select_top_fraction,
    ConfidenceError, ConfidenceMeasure, ConfidenceScore,
};
use crate::corpus::{balance_and_augment, CorpusError, Manifest};
use crate::estimator::{
    save_model, train, EstimatorError, EstimatorModel, LrSegment, TrainSchedule,
};
use crate::image::{normalize, read_image, ImageError, WordImage};
use crate::phoc::{PhocVector, PhocError};
use crate::rng;
use crate::spotting::{
    evaluate_map, recognize, EvalOptions, GalleryItem, Lexicon, Protocol, SpottingError,
};

#[derive(Debug, Error)]
pub enum AdaptError {
    #[error("unlabeled corpus is empty")]
    EmptyCorpus,
    #[error("lexicon is empty")]
    EmptyLexicon,
    #[error("invalid schedule: {0}")]
    BadSchedule(String),
    #[error("oracle confidence needs ground-truth embeddings")]
    MissingOracleTruth,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Confidence(#[from] ConfidenceError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Spotting(#[from] SpottingError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Phoc(#[from] PhocError),
}

/// Cycle loop hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptSchedule {
    pub cycles: usize,
    /// Selection fraction during the first `switch_cycle` cycles.
    pub fraction_early: f64,
    /// Selection fraction afterwards.
    pub fraction_late: f64,
    pub switch_cycle: usize,
    /// Balanced/augmented training-set size per cycle.
    pub augmented_size: usize,
    pub cycle_lr: f64,
    pub epochs_per_cycle: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub measure: ConfidenceMeasure,
    /// Forward passes for the mc-dropout measure.
    pub mc_passes: usize,
    pub affine: AffineBounds,
    pub seed: u64,
}

impl AdaptSchedule {
    pub fn default_with(measure: ConfidenceMeasure, seed: u64) -> Self {
        Self {
            cycles: 20,
            fraction_early: 0.10,
            fraction_late: 0.60,
            switch_cycle: 10,
            augmented_size: 10_000,
            cycle_lr: 1e-5,
            epochs_per_cycle: 1,
            batch_size: 10,
            weight_decay: 5e-5,
            measure,
            mc_passes: 100,
            affine: AffineBounds::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), AdaptError> {
        if self.cycles == 0 {
            return Err(AdaptError::BadSchedule("cycles must be >= 1".into()));
        }
        for f in [self.fraction_early, self.fraction_late] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(AdaptError::BadSchedule(format!("fraction {f} not in (0,1]")));
            }
        }
        if self.augmented_size == 0 || self.batch_size == 0 || self.epochs_per_cycle == 0 {
            return Err(AdaptError::BadSchedule("zero-sized training setting".into()));
        }
        Ok(())
    }

    /// Selection fraction for a zero-based cycle index.
    pub fn fraction(&self, cycle_index: usize) -> f64 {
        if cycle_index < self.switch_cycle {
            self.fraction_early
        } else {
            self.fraction_late
        }
    }

    fn cycle_seed(&self, cycle_index: usize) -> u64 {
        self.seed
            .wrapping_add((cycle_index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }
}

/// What happened in one cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub cycle: usize,
    pub selected: usize,
    pub mean_confidence: f64,
    pub distinct_pseudo_classes: usize,
    pub loss_first: f64,
    pub loss_last: f64,
    pub loss_trace: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pseudo_label_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qbe_map: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qbs_map: Option<f64>,
}

/// Label-consuming reporting inputs; never used for training.
#[derive(Default)]
pub struct Diagnostics<'a> {
    /// Canonical transcriptions of the unlabeled corpus, for pseudo-label
    /// accuracy.
    pub unlabeled_labels: Option<&'a [String]>,
    /// Labeled evaluation set scored by QbE/QbS mAP after every cycle.
    pub eval_set: Option<&'a EvalSet>,
}

/// A normalized, labeled evaluation corpus.
pub struct EvalSet {
    pub images: Vec<WordImage>,
    pub transcriptions: Vec<String>,
}

impl EvalSet {
    pub fn from_manifest(
        manifest: &Manifest,
        model: &EstimatorModel,
        invert: bool,
    ) -> Result<Self, AdaptError> {
        let desc = model.descriptor();
        let alphabet = &model.phoc_config().alphabet;
        let mut images = Vec::with_capacity(manifest.len());
        let mut transcriptions = Vec::with_capacity(manifest.len());
        for entry in &manifest.entries {
            let t = entry.transcription.as_deref().ok_or_else(|| {
                AdaptError::Spotting(SpottingError::MissingTranscription(entry.image_path.clone()))
            })?;
            let img = read_image(manifest.resolve(entry))?;
            images.push(normalize(&img, desc.input_h, desc.input_w, invert));
            transcriptions.push(alphabet.canonicalize(t));
        }
        Ok(Self {
            images,
            transcriptions,
        })
    }
}

/// Loads and normalizes a corpus for adaptation, ignoring transcriptions.
pub fn load_unlabeled(
    manifest: &Manifest,
    model: &EstimatorModel,
    invert: bool,
) -> Result<Vec<WordImage>, AdaptError> {
    let desc = model.descriptor();
    let images: Result<Vec<_>, AdaptError> = manifest
        .entries
        .par_iter()
        .map(|entry| {
            let img = read_image(manifest.resolve(entry))?;
            Ok(normalize(&img, desc.input_h, desc.input_w, invert))
        })
        .collect();
    images
}

fn embed_all(
    model: &EstimatorModel,
    images: &[WordImage],
) -> Result<Vec<Vec<f64>>, EstimatorError> {
    images
        .par_iter()
        .map(|img| {
            Ok(model
                .infer(img)?
                .values()
                .iter()
                .map(|&v| v as f64)
                .collect())
        })
        .collect()
}

fn confidences(
    model: &EstimatorModel,
    images: &[WordImage],
    estimates: &[Vec<f64>],
    schedule: &AdaptSchedule,
    cycle_index: usize,
    oracle_truth: Option<&[PhocVector]>,
) -> Result<Vec<(usize, ConfidenceScore)>, AdaptError> {
    let cycle_seed = schedule.cycle_seed(cycle_index);
    let to_attr = |e: &Vec<f64>| {
        crate::estimator::AttributeVector::new(e.iter().map(|&v| v as f32).collect())
    };
    match schedule.measure {
        ConfidenceMeasure::Sigmoid => Ok(estimates
            .iter()
            .enumerate()
            .map(|(i, e)| (i, conf_sigmoid(&to_attr(e))))
            .collect()),
        ConfidenceMeasure::Entropy => Ok(estimates
            .iter()
            .enumerate()
            .map(|(i, e)| (i, conf_entropy(&to_attr(e))))
            .collect()),
        ConfidenceMeasure::McDropout => images
            .par_iter()
            .enumerate()
            .map(|(i, img)| {
                let mut rng = rng::substream_indexed(cycle_seed, "mc", i as u64);
                let score = conf_mc_dropout(model, img, schedule.mc_passes, &mut rng)?;
                Ok((i, score))
            })
            .collect(),
        ConfidenceMeasure::Oracle => {
            let truth = oracle_truth.ok_or(AdaptError::MissingOracleTruth)?;
            estimates
                .iter()
                .enumerate()
                .map(|(i, e)| Ok((i, conf_oracle(&to_attr(e), &truth[i])?)))
                .collect()
        }
        ConfidenceMeasure::Random => Ok(estimates
            .iter()
            .enumerate()
            .map(|(i, _)| {
                let mut rng = rng::substream_indexed(cycle_seed, "random", i as u64);
                (
                    i,
                    ConfidenceScore {
                        value: rng.gen::<f64>(),
                        measure: ConfidenceMeasure::Random,
                    },
                )
            })
            .collect()),
    }
}

/// One pass of the cycle loop. `oracle_truth` is only consulted by the
/// oracle measure, `diagnostics` only fills report fields.
pub fn run_cycle(
    model: &mut EstimatorModel,
    unlabeled: &[WordImage],
    lexicon: &Lexicon,
    schedule: &AdaptSchedule,
    cycle_index: usize,
    oracle_truth: Option<&[PhocVector]>,
    diagnostics: &Diagnostics<'_>,
) -> Result<CycleReport, AdaptError> {
    schedule.validate()?;
    if unlabeled.is_empty() {
        return Err(AdaptError::EmptyCorpus);
    }
    if lexicon.is_empty() {
        return Err(AdaptError::EmptyLexicon);
    }

    let estimates = embed_all(model, unlabeled)?;
    let scores = confidences(model, unlabeled, &estimates, schedule, cycle_index, oracle_truth)?;
    let selected = select_top_fraction(&scores, schedule.fraction(cycle_index))?;
    let mean_confidence = selected
        .iter()
        .map(|&id| scores.iter().find(|(i, _)| *i == id).unwrap().1.value)
        .sum::<f64>()
        / selected.len().max(1) as f64;

    // pseudo-labels from lexicon recognition; targets are lexicon embeddings
    let pseudo: Vec<(usize, String)> = selected
        .par_iter()
        .map(|&id| {
            let rec = recognize(&estimates[id], lexicon)?;
            Ok((id, rec.label))
        })
        .collect::<Result<_, SpottingError>>()?;
    let classes: BTreeSet<&str> = pseudo.iter().map(|(_, l)| l.as_str()).collect();
    let target_of: HashMap<&str, &PhocVector> = lexicon
        .entries()
        .iter()
        .map(|(w, p)| (w.as_str(), p))
        .collect();

    let accuracy = diagnostics.unlabeled_labels.map(|labels| {
        let hits = pseudo
            .iter()
            .filter(|(id, label)| labels[*id] == *label)
            .count();
        hits as f64 / pseudo.len().max(1) as f64
    });

    // balance, augment, retrain
    let sources: Vec<(WordImage, String)> = pseudo
        .iter()
        .map(|(id, label)| (unlabeled[*id].clone(), label.clone()))
        .collect();
    let mut aug_rng = rng::substream(schedule.cycle_seed(cycle_index), "augment");
    let augmented = balance_and_augment(
        &sources,
        schedule.augmented_size,
        &schedule.affine,
        &mut aug_rng,
    )?;
    let dataset: Vec<(WordImage, PhocVector)> = augmented
        .into_iter()
        .map(|(img, label)| (img, (*target_of[label.as_str()]).clone()))
        .collect();
    let iterations =
        schedule.epochs_per_cycle * dataset.len().div_ceil(schedule.batch_size);
    let train_schedule = TrainSchedule {
        segments: vec![LrSegment {
            iterations,
            learning_rate: schedule.cycle_lr,
        }],
        batch_size: schedule.batch_size,
        weight_decay: schedule.weight_decay,
        seed: schedule.cycle_seed(cycle_index),
    };
    let trace = train(model, &dataset, &train_schedule)?;

    // optional per-cycle retrieval diagnostics with the freshly trained model
    let (mut qbe_map, mut qbs_map) = (None, None);
    if let Some(eval) = diagnostics.eval_set {
        let vectors = embed_all(model, &eval.images)?;
        let gallery: Vec<GalleryItem> = vectors
            .into_iter()
            .zip(&eval.transcriptions)
            .enumerate()
            .map(|(i, (a_hat, t))| GalleryItem {
                id: i.to_string(),
                a_hat,
                transcription: t.clone(),
            })
            .collect();
        let opts = EvalOptions {
            exclude_self: true,
            stopwords: Default::default(),
        };
        qbe_map = Some(evaluate_map(Protocol::Qbe, &gallery, model.phoc_config(), &opts)?.map);
        qbs_map = Some(evaluate_map(Protocol::Qbs, &gallery, model.phoc_config(), &opts)?.map);
    }

    Ok(CycleReport {
        cycle: cycle_index,
        selected: selected.len(),
        mean_confidence,
        distinct_pseudo_classes: classes.len(),
        loss_first: trace.first().copied().unwrap_or(f64::NAN),
        loss_last: trace.last().copied().unwrap_or(f64::NAN),
        loss_trace: trace,
        pseudo_label_accuracy: accuracy,
        qbe_map,
        qbs_map,
    })
}

/// Runs the full cycle loop. With an output directory, appends one JSON
/// record per cycle to `run_log.jsonl` and checkpoints the model as
/// `cycle_<k>.wsaf` after every cycle.
pub fn adapt(
    model: &mut EstimatorModel,
    unlabeled: &[WordImage],
    lexicon: &Lexicon,
    schedule: &AdaptSchedule,
    oracle_truth: Option<&[PhocVector]>,
    diagnostics: &Diagnostics<'_>,
    out_dir: Option<&Path>,
) -> Result<Vec<CycleReport>, AdaptError> {
    schedule.validate()?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut reports = Vec::with_capacity(schedule.cycles);
    for k in 0..schedule.cycles {
        let report = run_cycle(model, unlabeled, lexicon, schedule, k, oracle_truth, diagnostics)?;
        if let Some(dir) = out_dir {
            save_model(model, dir.join(format!("cycle_{k}.wsaf")))?;
            let mut log = OpenOptions::new()
                .create(true)
                .append(true)
                .open(dir.join("run_log.jsonl"))?;
            writeln!(log, "{}", serde_json::to_string(&report).expect("report serializes"))?;
        }
        reports.push(report);
    }
    Ok(reports)
}
