//! Corpus manifests and class-balanced augmentation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use thiserror::Error;

use crate::affine::{apply_affine, sample_affine, AffineBounds};
use crate::image::WordImage;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed manifest line {line}: {reason}")]
    MalformedManifest { line: usize, reason: String },
    #[error("no samples given")]
    EmptyCorpus,
    #[error("target_count {target} is below the number of distinct labels {classes}")]
    TargetTooSmall { target: usize, classes: usize },
}

/// One manifest row: an image path relative to the manifest root, optionally
/// with a transcription.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image_path: String,
    pub transcription: Option<String>,
}

/// TSV listing of a word-image corpus: `path<TAB>transcription` per line,
/// transcription column optional, `#` lines ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(root: impl Into<PathBuf>, entries: Vec<ManifestEntry>) -> Self {
        Self {
            root: root.into(),
            entries,
        }
    }

    /// Loads a manifest file; entry paths resolve relative to the file's
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let root = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.splitn(2, '\t');
            let image_path = cols.next().unwrap().to_string();
            if image_path.is_empty() {
                return Err(CorpusError::MalformedManifest {
                    line: i + 1,
                    reason: "empty image path".into(),
                });
            }
            let transcription = match cols.next() {
                Some(t) if !t.is_empty() => Some(t.to_string()),
                Some(_) => {
                    return Err(CorpusError::MalformedManifest {
                        line: i + 1,
                        reason: "empty transcription column".into(),
                    })
                }
                None => None,
            };
            entries.push(ManifestEntry {
                image_path,
                transcription,
            });
        }
        Ok(Self { root, entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let mut out = String::new();
        for e in &self.entries {
            match &e.transcription {
                Some(t) => writeln!(out, "{}\t{}", e.image_path, t).unwrap(),
                None => writeln!(out, "{}", e.image_path).unwrap(),
            }
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.image_path)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Builds a class-balanced, augmented training set of exactly `target_count`
/// samples. Each draw picks a label class uniformly, then a source image of
/// that class uniformly, and emits a fresh affine augmentation of it.
pub fn balance_and_augment(
    samples: &[(WordImage, String)],
    target_count: usize,
    bounds: &AffineBounds,
    rng: &mut impl Rng,
) -> Result<Vec<(WordImage, String)>, CorpusError> {
    if samples.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    // BTreeMap keeps class iteration order independent of hash state
    let mut by_class: BTreeMap<&str, Vec<&WordImage>> = BTreeMap::new();
    for (img, label) in samples {
        by_class.entry(label.as_str()).or_default().push(img);
    }
    let classes: Vec<(&str, Vec<&WordImage>)> = by_class.into_iter().collect();
    if target_count < classes.len() {
        return Err(CorpusError::TargetTooSmall {
            target: target_count,
            classes: classes.len(),
        });
    }
    let mut out = Vec::with_capacity(target_count);
    for _ in 0..target_count {
        let (label, sources) = &classes[rng.gen_range(0..classes.len())];
        let src = sources[rng.gen_range(0..sources.len())];
        let params = sample_affine(rng, bounds);
        out.push((apply_affine(src, &params), label.to_string()));
    }
    Ok(out)
}
