//! Annotation-free, segmentation-based word spotting.
//!
//! The pipeline: an attribute estimator is trained on synthetically rendered
//! word images, then iteratively adapted to an unlabeled target corpus by
//! selecting confidently estimated samples, pseudo-labeling them through
//! lexicon-based recognition, and retraining on the augmented pseudo-labeled
//! set. Retrieval (query-by-example and query-by-string) ranks word images by
//! cosine dissimilarity between attribute vectors and is scored by mean
//! average precision.

pub mod adapt;
pub mod affine;
pub mod confidence;
pub mod corpus;
pub mod estimator;
pub mod image;
pub mod phoc;
pub mod rng;
pub mod spotting;
pub mod synth;

pub use adapt::{AdaptSchedule, CycleReport};
pub use affine::{AffineBounds, AffineParams};
pub use confidence::{ConfidenceMeasure, ConfidenceScore};
pub use corpus::Manifest;
pub use estimator::{AttributeVector, EstimatorModel};
pub use image::WordImage;
pub use phoc::{Alphabet, PhocConfig, PhocVector};
pub use spotting::{Lexicon, RankedList, RecognitionResult};
pub use synth::{GlyphVariant, StyleFamily};
