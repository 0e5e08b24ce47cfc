//! Confidence measures over attribute-vector predictions.
//!
//! Every measure is oriented so that higher means more confident, which
//! gives subset selection a single contract: entropy enters negated and the
//! mc-dropout measure is the negative mean attribute variance.

use rand::Rng;
use thiserror::Error;

use crate::estimator::{AttributeVector, EstimatorError, ForwardMode, Model};
use crate::image::WordImage;
use crate::phoc::PhocVector;
use crate::spotting;

/// Clamp shared with the estimator's log computations.
const LOG_CLAMP: f64 = crate::estimator::LOG_CLAMP;

#[derive(Debug, Error)]
pub enum ConfidenceError {
    #[error("scores from different measures cannot be compared")]
    MixedMeasures,
    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("ground-truth vector is all zero")]
    ZeroVector,
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// Which confidence function produced a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfidenceMeasure {
    /// Sum of sigmoid activations over active attributes.
    Sigmoid,
    /// Negative joint entropy of the attribute Bernoulli variables.
    Entropy,
    /// Negative mean attribute variance over stochastic forward passes.
    McDropout,
    /// Negative cosine dissimilarity to the true embedding. Diagnostic only;
    /// needs labels.
    Oracle,
    /// Uniform random scores; the selection baseline.
    Random,
}

impl ConfidenceMeasure {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Sigmoid => "sigmoid",
            Self::Entropy => "entropy",
            Self::McDropout => "mc-dropout",
            Self::Oracle => "oracle",
            Self::Random => "random",
        }
    }
}

/// Higher value = more confident. Comparable only within one measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceScore {
    pub value: f64,
    pub measure: ConfidenceMeasure,
}

/// Sum of the estimates of all active attributes (activations above 0.5);
/// inactive attributes contribute nothing.
pub fn conf_sigmoid(a_hat: &AttributeVector) -> ConfidenceScore {
    let value = a_hat
        .values()
        .iter()
        .filter(|&&v| v > 0.5)
        .map(|&v| v as f64)
        .sum();
    ConfidenceScore {
        value,
        measure: ConfidenceMeasure::Sigmoid,
    }
}

/// Negative joint entropy under attribute independence, natural logarithm,
/// `0 ln 0 = 0`. Always <= 0; 0 exactly on binary vectors.
pub fn conf_entropy(a_hat: &AttributeVector) -> ConfidenceScore {
    let term = |p: f64| {
        if p <= 0.0 || p >= 1.0 {
            0.0
        } else {
            let p = p.clamp(LOG_CLAMP, 1.0 - LOG_CLAMP);
            p * p.ln() + (1.0 - p) * (1.0 - p).ln()
        }
    };
    let value = a_hat.values().iter().map(|&v| term(v as f64)).sum();
    ConfidenceScore {
        value,
        measure: ConfidenceMeasure::Entropy,
    }
}

/// Runs `passes` dropout forward passes and scores by the negative mean of
/// the per-attribute variances.
pub fn conf_mc_dropout(
    model: &Model<f32>,
    image: &WordImage,
    passes: usize,
    rng: &mut impl Rng,
) -> Result<ConfidenceScore, ConfidenceError> {
    assert!(passes > 0);
    let d = model.output_dim();
    let mut sum = vec![0.0f64; d];
    let mut sum_sq = vec![0.0f64; d];
    for _ in 0..passes {
        let out = model.forward(image, ForwardMode::McDropout(rng))?;
        for (i, &v) in out.values().iter().enumerate() {
            sum[i] += v as f64;
            sum_sq[i] += (v as f64) * (v as f64);
        }
    }
    let n = passes as f64;
    let mean_var = (0..d)
        .map(|i| (sum_sq[i] / n - (sum[i] / n).powi(2)).max(0.0))
        .sum::<f64>()
        / d as f64;
    Ok(ConfidenceScore {
        value: -mean_var,
        measure: ConfidenceMeasure::McDropout,
    })
}

/// Negative cosine dissimilarity between the estimate and the embedding of
/// the true transcription.
pub fn conf_oracle(
    a_hat: &AttributeVector,
    truth: &PhocVector,
) -> Result<ConfidenceScore, ConfidenceError> {
    if a_hat.len() != truth.len() {
        return Err(ConfidenceError::LengthMismatch(a_hat.len(), truth.len()));
    }
    if truth.bits().iter().all(|&b| b == 0) {
        return Err(ConfidenceError::ZeroVector);
    }
    let u: Vec<f64> = a_hat.values().iter().map(|&v| v as f64).collect();
    let v = truth.as_f64();
    let d = spotting::d_cos(&u, &v).expect("both vectors checked non-zero");
    Ok(ConfidenceScore {
        value: -d,
        measure: ConfidenceMeasure::Oracle,
    })
}

/// Returns the ids of the `ceil(fraction * n)` highest-scoring items. Ties
/// at the cut break toward the lower id.
pub fn select_top_fraction(
    items: &[(usize, ConfidenceScore)],
    fraction: f64,
) -> Result<Vec<usize>, ConfidenceError> {
    assert!(fraction > 0.0 && fraction <= 1.0);
    if items.is_empty() {
        return Ok(Vec::new());
    }
    let measure = items[0].1.measure;
    if items.iter().any(|(_, s)| s.measure != measure) {
        return Err(ConfidenceError::MixedMeasures);
    }
    let mut order: Vec<&(usize, ConfidenceScore)> = items.iter().collect();
    order.sort_by(|a, b| {
        b.1.value
            .partial_cmp(&a.1.value)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    let take = ((fraction * items.len() as f64).ceil() as usize).min(items.len());
    Ok(order[..take].iter().map(|(id, _)| *id).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::ArchDescriptor;
    use crate::phoc::{phoc_of_string, Alphabet, PhocConfig};
    use crate::rng::substream;

    fn av(values: &[f32]) -> AttributeVector {
        AttributeVector::new(values.to_vec())
    }

    #[test]
    fn sigmoid_sums_active_attributes_only() {
        let s = conf_sigmoid(&av(&[0.9, 0.6, 0.4, 0.1]));
        assert!((s.value - 1.5).abs() < 1e-9);

        let none = conf_sigmoid(&av(&[0.5, 0.2, 0.01]));
        assert_eq!(none.value, 0.0);

        let one = conf_sigmoid(&av(&[1.0 - 1e-6, 0.3]));
        assert!((one.value - 1.0).abs() < 1e-5);
    }

    #[test]
    fn sigmoid_ignores_sub_half_perturbations() {
        let base = conf_sigmoid(&av(&[0.9, 0.6, 0.4, 0.1]));
        let perturbed = conf_sigmoid(&av(&[0.9, 0.6, 0.17, 0.499]));
        assert_eq!(base.value, perturbed.value);
    }

    #[test]
    fn entropy_closed_forms() {
        let half = conf_entropy(&av(&[0.5; 540]));
        assert!(
            (half.value - (-540.0 * std::f64::consts::LN_2)).abs()
                / (540.0 * std::f64::consts::LN_2)
                < 1e-9
        );

        let two = conf_entropy(&av(&[0.9, 0.1]));
        let (p, q) = (0.9f32 as f64, 0.1f32 as f64);
        let expected = (p * p.ln() + (1.0 - p) * (1.0 - p).ln())
            + (q * q.ln() + (1.0 - q) * (1.0 - q).ln());
        assert!((two.value - (-0.6502)).abs() < 1e-4);
        assert!((two.value - expected).abs() < 1e-9);
        assert!(two.value < 0.0);
    }

    #[test]
    fn entropy_is_symmetric_under_complement() {
        let a = conf_entropy(&av(&[0.8, 0.3, 0.6]));
        let b = conf_entropy(&av(&[0.2, 0.7, 0.4]));
        assert!((a.value - b.value).abs() < 1e-6);
    }

    #[test]
    fn oracle_closed_forms() {
        let cfg = PhocConfig::new(vec![1], Alphabet::new(['a', 'b']).unwrap(), 0.5).unwrap();
        let truth_a = phoc_of_string("a", &cfg).unwrap(); // (1, 0)
        let truth_ab = phoc_of_string("ab", &cfg).unwrap(); // (1, 1)

        // estimate proportional to truth
        let s = conf_oracle(&av(&[0.9, 1e-9]), &truth_a).unwrap();
        assert!(s.value.abs() < 1e-6);

        // orthogonal
        let s = conf_oracle(&av(&[1e-12, 0.9]), &truth_a).unwrap();
        assert!((s.value + 1.0).abs() < 1e-5);

        // (1,1) against (1,0)
        let s = conf_oracle(&av(&[0.999999, 0.999999]), &truth_a).unwrap();
        assert!((s.value - (-(1.0 - 1.0 / 2f64.sqrt()))).abs() < 1e-5);
        let _ = truth_ab;
    }

    #[test]
    fn oracle_rejects_bad_inputs() {
        let cfg = PhocConfig::new(vec![1], Alphabet::new(['a', 'b']).unwrap(), 0.5).unwrap();
        let truth = phoc_of_string("a", &cfg).unwrap();
        assert!(matches!(
            conf_oracle(&av(&[0.5; 3]), &truth),
            Err(ConfidenceError::LengthMismatch(3, 2))
        ));
    }

    #[test]
    fn mc_dropout_zero_p_is_maximally_confident() {
        let cfg = PhocConfig::new(vec![1, 2], Alphabet::new(['a', 'b']).unwrap(), 0.5).unwrap();
        let desc = ArchDescriptor {
            input_h: 8,
            input_w: 8,
            conv_channels: vec![2],
            fc_hidden: 4,
            output_dim: 6,
            dropout_p: 0.0,
        };
        let model = Model::<f32>::init(desc, cfg, 3).unwrap();
        let img = WordImage::zeros(8, 8);
        let s = conf_mc_dropout(&model, &img, 10, &mut substream(0, "mc")).unwrap();
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn mc_dropout_is_seeded_and_nonpositive() {
        let cfg = PhocConfig::new(vec![1, 2], Alphabet::new(['a', 'b']).unwrap(), 0.5).unwrap();
        let desc = ArchDescriptor {
            input_h: 8,
            input_w: 8,
            conv_channels: vec![2],
            fc_hidden: 4,
            output_dim: 6,
            dropout_p: 0.5,
        };
        let model = Model::<f32>::init(desc, cfg, 3).unwrap();
        let mut img = WordImage::zeros(8, 8);
        img.set(3, 3, 1.0);
        let a = conf_mc_dropout(&model, &img, 25, &mut substream(4, "mc")).unwrap();
        let b = conf_mc_dropout(&model, &img, 25, &mut substream(4, "mc")).unwrap();
        assert_eq!(a.value, b.value);
        assert!(a.value <= 0.0);
    }

    fn score(v: f64) -> ConfidenceScore {
        ConfidenceScore {
            value: v,
            measure: ConfidenceMeasure::Sigmoid,
        }
    }

    #[test]
    fn selection_counts_and_ordering() {
        let items: Vec<(usize, ConfidenceScore)> =
            (0..10).map(|i| (i, score(i as f64))).collect();
        assert_eq!(select_top_fraction(&items, 0.1).unwrap(), vec![9]);
        let all = select_top_fraction(&items, 1.0).unwrap();
        assert_eq!(all, (0..10).rev().collect::<Vec<_>>());
    }

    #[test]
    fn selection_breaks_ties_by_lower_id() {
        let items = vec![(3, score(1.0)), (1, score(1.0)), (2, score(5.0))];
        assert_eq!(select_top_fraction(&items, 0.5).unwrap(), vec![2, 1]);
    }

    #[test]
    fn mixed_measures_rejected() {
        let items = vec![
            (0, score(1.0)),
            (
                1,
                ConfidenceScore {
                    value: 0.0,
                    measure: ConfidenceMeasure::Entropy,
                },
            ),
        ];
        assert!(matches!(
            select_top_fraction(&items, 0.5),
            Err(ConfidenceError::MixedMeasures)
        ));
    }
}
