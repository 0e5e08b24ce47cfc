//! Lexicon-based recognition, cosine ranking and retrieval evaluation.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::Manifest;
use crate::estimator::{EstimatorError, EstimatorModel};
use crate::image::{normalize, read_image, ImageError};
use crate::phoc::{phoc_of_string, PhocConfig, PhocError, PhocVector};

#[derive(Debug, Error)]
pub enum SpottingError {
    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("lexicon is empty")]
    EmptyLexicon,
    #[error("gallery is empty")]
    EmptyGallery,
    #[error("relevance list has no relevant item")]
    NoRelevant,
    #[error("no valid queries in the test set")]
    NoQueries,
    #[error("manifest entry {0} has no transcription")]
    MissingTranscription(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Phoc(#[from] PhocError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// Cosine dissimilarity `1 - cos(u, v)`; in `[0, 1]` for the nonnegative
/// vectors used here.
pub fn d_cos(u: &[f64], v: &[f64]) -> Result<f64, SpottingError> {
    if u.len() != v.len() {
        return Err(SpottingError::LengthMismatch(u.len(), v.len()));
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (&a, &b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(SpottingError::ZeroVector);
    }
    Ok(1.0 - dot / (nu.sqrt() * nv.sqrt()))
}

/// Ordered word list with precomputed embeddings.
#[derive(Debug, Clone)]
pub struct Lexicon {
    entries: Vec<(String, PhocVector)>,
}

impl Lexicon {
    /// Canonicalizes, deduplicates preserving first occurrence, and embeds
    /// every word. Words that canonicalize to empty are dropped.
    pub fn from_words<S: AsRef<str>>(
        words: impl IntoIterator<Item = S>,
        config: &PhocConfig,
    ) -> Result<Self, SpottingError> {
        let mut seen = HashSet::new();
        let mut entries = Vec::new();
        for word in words {
            let canon = config.alphabet.canonicalize(word.as_ref());
            if canon.is_empty() || !seen.insert(canon.clone()) {
                continue;
            }
            let phoc = phoc_of_string(&canon, config)?;
            entries.push((canon, phoc));
        }
        if entries.is_empty() {
            return Err(SpottingError::EmptyLexicon);
        }
        Ok(Self { entries })
    }

    /// Loads a lexicon file: UTF-8, one word per line, `#` comments allowed.
    pub fn load(path: impl AsRef<Path>, config: &PhocConfig) -> Result<Self, SpottingError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_words(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
            config,
        )
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, PhocVector)] {
        &self.entries
    }

    pub fn contains(&self, canonical_word: &str) -> bool {
        self.entries.iter().any(|(w, _)| w == canonical_word)
    }
}

/// Output of lexicon-based recognition.
#[derive(Debug, Clone, PartialEq)]
pub struct RecognitionResult {
    pub label: String,
    pub dissimilarity: f64,
    pub lexicon_index: usize,
}

/// Nearest-neighbour search over the lexicon; ties break toward the lowest
/// lexicon index.
pub fn recognize(a_hat: &[f64], lexicon: &Lexicon) -> Result<RecognitionResult, SpottingError> {
    if lexicon.is_empty() {
        return Err(SpottingError::EmptyLexicon);
    }
    let mut best: Option<RecognitionResult> = None;
    for (i, (word, phoc)) in lexicon.entries.iter().enumerate() {
        let d = d_cos(a_hat, &phoc.as_f64())?;
        if best.as_ref().map_or(true, |b| d < b.dissimilarity) {
            best = Some(RecognitionResult {
                label: word.clone(),
                dissimilarity: d,
                lexicon_index: i,
            });
        }
    }
    Ok(best.expect("lexicon non-empty"))
}

/// Retrieval result: gallery ids with non-decreasing dissimilarities.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    pub items: Vec<(usize, f64)>,
}

/// Sorts the gallery by dissimilarity to a query vector; equal scores order
/// by ascending id.
pub fn rank_gallery(
    query_id: &str,
    query: &[f64],
    gallery: &[Vec<f64>],
) -> Result<RankedList, SpottingError> {
    if gallery.is_empty() {
        return Err(SpottingError::EmptyGallery);
    }
    let mut items = Vec::with_capacity(gallery.len());
    for (id, g) in gallery.iter().enumerate() {
        items.push((id, d_cos(query, g)?));
    }
    items.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(RankedList {
        query_id: query_id.to_string(),
        items,
    })
}

/// Query-by-string ranking: the query vector is the embedding of the string.
pub fn rank_qbs(
    query: &str,
    gallery: &[Vec<f64>],
    config: &PhocConfig,
) -> Result<RankedList, SpottingError> {
    let phoc = phoc_of_string(query, config)?;
    rank_gallery(query, &phoc.as_f64(), gallery)
}

/// Query-by-example ranking: the query vector is the model's estimate for
/// the query image.
pub fn rank_qbe(
    query_id: &str,
    query_image: &crate::image::WordImage,
    gallery: &[Vec<f64>],
    model: &EstimatorModel,
) -> Result<RankedList, SpottingError> {
    let a_hat = model.infer(query_image)?;
    let q: Vec<f64> = a_hat.values().iter().map(|&v| v as f64).collect();
    rank_gallery(query_id, &q, gallery)
}

/// Interpolation-free average precision: mean of precision@k over the
/// relevant ranks.
pub fn average_precision(relevance: &[bool]) -> Result<f64, SpottingError> {
    let total_relevant = relevance.iter().filter(|&&r| r).count();
    if total_relevant == 0 {
        return Err(SpottingError::NoRelevant);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &rel) in relevance.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / total_relevant as f64)
}

/// One embedded gallery item ready for evaluation.
#[derive(Debug, Clone)]
pub struct GalleryItem {
    pub id: String,
    pub a_hat: Vec<f64>,
    /// Canonical transcription.
    pub transcription: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Qbe,
    Qbs,
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub exclude_self: bool,
    /// Canonical stopwords: never queries, always distractors.
    pub stopwords: HashSet<String>,
}

#[derive(Debug, Clone)]
pub struct QueryAp {
    pub query_id: String,
    pub query: String,
    pub ap: f64,
    pub num_relevant: usize,
}

#[derive(Debug, Clone)]
pub struct MapReport {
    pub map: f64,
    pub per_query: Vec<QueryAp>,
}

impl MapReport {
    /// TSV report: `query_id  query  ap  num_relevant` rows, footer
    /// `mAP  <value>` with 4 decimals.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for q in &self.per_query {
            writeln!(
                out,
                "{}\t{}\t{:.4}\t{}",
                q.query_id, q.query, q.ap, q.num_relevant
            )
            .unwrap();
        }
        writeln!(out, "mAP\t{:.4}", self.map).unwrap();
        out
    }
}

/// Runs the retrieval protocol over an embedded gallery.
///
/// QbE: every gallery item is a query once; the query instance itself is
/// removed from its own ranked list when `exclude_self` is set and queries
/// with no remaining relevant item are skipped. QbS: every unique canonical
/// transcription is a query once, embedded as a string. Stopword
/// transcriptions are never queries but stay in the gallery.
pub fn evaluate_map(
    protocol: Protocol,
    gallery: &[GalleryItem],
    config: &PhocConfig,
    options: &EvalOptions,
) -> Result<MapReport, SpottingError> {
    if gallery.is_empty() {
        return Err(SpottingError::EmptyGallery);
    }
    let vectors: Vec<&Vec<f64>> = gallery.iter().map(|g| &g.a_hat).collect();
    let mut per_query = Vec::new();
    match protocol {
        Protocol::Qbe => {
            for (qi, q) in gallery.iter().enumerate() {
                if options.stopwords.contains(&q.transcription) {
                    continue;
                }
                let mut items: Vec<(usize, f64)> = Vec::with_capacity(gallery.len());
                for (id, g) in vectors.iter().enumerate() {
                    if options.exclude_self && id == qi {
                        continue;
                    }
                    items.push((id, d_cos(&q.a_hat, g)?));
                }
                items.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
                let relevance: Vec<bool> = items
                    .iter()
                    .map(|&(id, _)| gallery[id].transcription == q.transcription)
                    .collect();
                if !relevance.iter().any(|&r| r) {
                    continue;
                }
                per_query.push(QueryAp {
                    query_id: q.id.clone(),
                    query: q.transcription.clone(),
                    ap: average_precision(&relevance)?,
                    num_relevant: relevance.iter().filter(|&&r| r).count(),
                });
            }
        }
        Protocol::Qbs => {
            let mut queries: Vec<&str> = Vec::new();
            let mut seen = HashSet::new();
            for g in gallery {
                if !options.stopwords.contains(&g.transcription)
                    && seen.insert(g.transcription.as_str())
                {
                    queries.push(&g.transcription);
                }
            }
            for word in queries {
                let ranked = rank_qbs(word, &vectors.iter().map(|v| (*v).clone()).collect::<Vec<_>>(), config)?;
                let relevance: Vec<bool> = ranked
                    .items
                    .iter()
                    .map(|&(id, _)| gallery[id].transcription == word)
                    .collect();
                per_query.push(QueryAp {
                    query_id: word.to_string(),
                    query: word.to_string(),
                    ap: average_precision(&relevance)?,
                    num_relevant: relevance.iter().filter(|&&r| r).count(),
                });
            }
        }
    }
    if per_query.is_empty() {
        return Err(SpottingError::NoQueries);
    }
    let map = per_query.iter().map(|q| q.ap).sum::<f64>() / per_query.len() as f64;
    Ok(MapReport { map, per_query })
}

/// Loads, normalizes and embeds every manifest image with the model in eval
/// mode. Transcriptions are required and canonicalized.
pub fn gallery_from_manifest(
    model: &EstimatorModel,
    manifest: &Manifest,
    invert: bool,
) -> Result<Vec<GalleryItem>, SpottingError> {
    let desc = model.descriptor();
    let alphabet = &model.phoc_config().alphabet;
    manifest
        .entries
        .par_iter()
        .map(|entry| {
            let transcription = entry
                .transcription
                .as_deref()
                .ok_or_else(|| SpottingError::MissingTranscription(entry.image_path.clone()))?;
            let img = read_image(manifest.resolve(entry))?;
            let norm = normalize(&img, desc.input_h, desc.input_w, invert);
            let a_hat = model.infer(&norm)?;
            Ok(GalleryItem {
                id: entry.image_path.clone(),
                a_hat: a_hat.values().iter().map(|&v| v as f64).collect(),
                transcription: alphabet.canonicalize(transcription),
            })
        })
        .collect()
}
