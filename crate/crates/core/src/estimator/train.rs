//! Mini-batch training loop.

use num_traits::Float;
use rayon::prelude::*;

use super::{adam_step, AdamConfig, AdamState, EstimatorError, Model};
use crate::image::WordImage;
use crate::phoc::PhocVector;
use crate::rng;

/// One constant-learning-rate stretch of a schedule.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LrSegment {
    pub iterations: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainSchedule {
    pub segments: Vec<LrSegment>,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl TrainSchedule {
    /// Desk-scale counterpart of the full-scale two-segment schedule,
    /// preserving the 7:1 split and the 10x learning-rate drop.
    pub fn desk_default(seed: u64) -> Self {
        Self {
            segments: vec![
                LrSegment {
                    iterations: 4000,
                    learning_rate: 1e-4,
                },
                LrSegment {
                    iterations: 500,
                    learning_rate: 1e-5,
                },
            ],
            batch_size: 10,
            weight_decay: 5e-5,
            seed,
        }
    }

    pub fn total_iterations(&self) -> usize {
        self.segments.iter().map(|s| s.iterations).sum()
    }
}

/// Trains with shuffled mini-batches and per-iteration mean-gradient ADAM
/// updates. Deterministic given the schedule seed: sample gradients are
/// computed in parallel but reduced in batch order, and each sample draws
/// its dropout mask from its own substream.
pub fn train<F: Float + Send + Sync>(
    model: &mut Model<F>,
    dataset: &[(WordImage, PhocVector)],
    schedule: &TrainSchedule,
) -> Result<Vec<f64>, EstimatorError> {
    if dataset.is_empty() {
        return Err(EstimatorError::EmptyDataset);
    }
    assert!(schedule.batch_size > 0);
    let mut adam = AdamState::new(
        AdamConfig {
            learning_rate: schedule.segments.first().map(|s| s.learning_rate).unwrap_or(0.0),
            weight_decay: schedule.weight_decay,
            ..AdamConfig::default()
        },
        model.params().len(),
    );
    let mut shuffle_rng = rng::substream(schedule.seed, "shuffle");
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut cursor = dataset.len(); // forces an initial shuffle
    let mut trace = Vec::with_capacity(schedule.total_iterations());
    let mut sample_counter = 0u64;

    for segment in &schedule.segments {
        adam.config.learning_rate = segment.learning_rate;
        for _ in 0..segment.iterations {
            let mut batch = Vec::with_capacity(schedule.batch_size);
            for _ in 0..schedule.batch_size {
                if cursor >= order.len() {
                    use rand::seq::SliceRandom;
                    order.shuffle(&mut shuffle_rng);
                    cursor = 0;
                }
                batch.push((order[cursor], sample_counter));
                cursor += 1;
                sample_counter += 1;
            }

            let results: Vec<(F, Vec<F>)> = batch
                .par_iter()
                .map(|&(idx, stamp)| {
                    let (img, target) = &dataset[idx];
                    let mut dropout_rng = rng::substream_indexed(schedule.seed, "dropout", stamp);
                    model
                        .loss_and_grad(img, target, Some(&mut dropout_rng))
                        .expect("dataset matches model geometry")
                })
                .collect();

            let scale = F::one() / F::from(batch.len()).unwrap();
            let mut mean_grad = vec![F::zero(); model.params().len()];
            let mut mean_loss = F::zero();
            for (loss, grad) in &results {
                mean_loss = mean_loss + *loss;
                for (m, g) in mean_grad.iter_mut().zip(grad) {
                    *m = *m + *g;
                }
            }
            for m in &mut mean_grad {
                *m = *m * scale;
            }
            trace.push((mean_loss * scale).to_f64().unwrap());
            adam_step(&mut adam, model.params_mut(), &mean_grad)?;
        }
    }
    Ok(trace)
}
