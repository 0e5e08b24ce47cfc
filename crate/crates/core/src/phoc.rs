//! Pyramidal Histogram of Characters embeddings.
//!
//! A word is embedded as a binary attribute vector: at pyramid level `l` the
//! word is split into `l` horizontal regions and one bit per (character,
//! region) pair records whether the character occurs in that region. With the
//! default alphabet (a-z, 0-9) and levels 1, 2, 4, 8 the vector has 540
//! dimensions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PhocError {
    #[error("word contains no alphabet characters after canonicalization")]
    EmptyWord,
    #[error("invalid phoc config: {0}")]
    BadConfig(String),
}

/// Ordered set of symbols the embedding covers. Order is fixed and part of
/// any persisted artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    symbols: Vec<char>,
}

impl Alphabet {
    pub fn new(symbols: impl IntoIterator<Item = char>) -> Result<Self, PhocError> {
        let symbols: Vec<char> = symbols.into_iter().collect();
        let mut seen = std::collections::HashSet::new();
        for &c in &symbols {
            if !seen.insert(c) {
                return Err(PhocError::BadConfig(format!("duplicate symbol {c:?}")));
            }
        }
        if symbols.is_empty() {
            return Err(PhocError::BadConfig("empty alphabet".into()));
        }
        Ok(Self { symbols })
    }

    /// Lowercase Latin letters followed by digits, 36 symbols.
    pub fn latin_digits() -> Self {
        Self {
            symbols: ('a'..='z').chain('0'..='9').collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.symbols.iter().position(|&s| s == c)
    }

    /// Lowercases and drops every character outside the alphabet. The result
    /// may be empty.
    pub fn canonicalize(&self, word: &str) -> String {
        word.chars()
            .flat_map(char::to_lowercase)
            .filter(|c| self.index_of(*c).is_some())
            .collect()
    }
}

impl Default for Alphabet {
    fn default() -> Self {
        Self::latin_digits()
    }
}

/// Pyramid levels, alphabet and region-overlap threshold defining one
/// embedding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhocConfig {
    pub levels: Vec<usize>,
    pub alphabet: Alphabet,
    /// A (character, region) attribute is active iff the overlap between the
    /// character's occupancy interval and the region covers at least this
    /// fraction of the character's own span. Inclusive comparison.
    pub overlap_threshold: f64,
}

impl PhocConfig {
    pub fn new(
        levels: Vec<usize>,
        alphabet: Alphabet,
        overlap_threshold: f64,
    ) -> Result<Self, PhocError> {
        if levels.is_empty() || levels[0] == 0 {
            return Err(PhocError::BadConfig("levels must be positive".into()));
        }
        if !levels.windows(2).all(|w| w[0] < w[1]) {
            return Err(PhocError::BadConfig("levels must be strictly increasing".into()));
        }
        if !(overlap_threshold > 0.0 && overlap_threshold <= 1.0) {
            return Err(PhocError::BadConfig("overlap_threshold must be in (0,1]".into()));
        }
        Ok(Self {
            levels,
            alphabet,
            overlap_threshold,
        })
    }

    /// Total embedding dimension: alphabet size times the sum of levels.
    pub fn dim(&self) -> usize {
        self.alphabet.len() * self.levels.iter().sum::<usize>()
    }

    /// Identifier binding persisted vectors and models to this config.
    pub fn hash(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        let mut feed = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for &l in &self.levels {
            feed(&(l as u64).to_le_bytes());
        }
        for &c in self.alphabet.symbols() {
            feed(&(c as u32).to_le_bytes());
        }
        feed(&self.overlap_threshold.to_le_bytes());
        h
    }
}

impl Default for PhocConfig {
    fn default() -> Self {
        Self {
            levels: vec![1, 2, 4, 8],
            alphabet: Alphabet::latin_digits(),
            overlap_threshold: 0.5,
        }
    }
}

/// Binary attribute embedding of a string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhocVector {
    bits: Vec<u8>,
    config_hash: u64,
}

impl PhocVector {
    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn config_hash(&self) -> u64 {
        self.config_hash
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn as_f32(&self) -> Vec<f32> {
        self.bits.iter().map(|&b| b as f32).collect()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| b as f64).collect()
    }
}

/// Embedding dimension of a config.
pub fn phoc_dim(config: &PhocConfig) -> usize {
    config.dim()
}

/// See [`Alphabet::canonicalize`].
pub fn canonicalize(word: &str, alphabet: &Alphabet) -> String {
    alphabet.canonicalize(word)
}

/// Builds the PHOC embedding of `word`.
///
/// Character `i` of the canonical word of length `n` occupies the interval
/// `[i/n, (i+1)/n]`. The attribute for (character, level `l`, region `r`) is
/// set iff that interval overlaps region `[r/l, (r+1)/l]` by at least
/// `overlap_threshold / n` (inclusive). Layout is level-major in config
/// order, region-minor, character index innermost.
pub fn phoc_of_string(word: &str, config: &PhocConfig) -> Result<PhocVector, PhocError> {
    let canon = config.alphabet.canonicalize(word);
    if canon.is_empty() {
        return Err(PhocError::EmptyWord);
    }
    let n = canon.chars().count() as f64;
    let abc = config.alphabet.len();
    let mut bits = vec![0u8; config.dim()];
    let mut level_offset = 0usize;
    for &level in &config.levels {
        for (i, c) in canon.chars().enumerate() {
            let ci = config
                .alphabet
                .index_of(c)
                .expect("canonical characters are in the alphabet");
            let occ_lo = i as f64 / n;
            let occ_hi = (i + 1) as f64 / n;
            for r in 0..level {
                let reg_lo = r as f64 / level as f64;
                let reg_hi = (r + 1) as f64 / level as f64;
                let overlap = occ_hi.min(reg_hi) - occ_lo.max(reg_lo);
                // small epsilon keeps exact-tie cases inclusive under
                // floating-point rounding
                if overlap * n + 1e-9 >= config.overlap_threshold {
                    bits[level_offset + r * abc + ci] = 1;
                }
            }
        }
        level_offset += level * abc;
    }
    Ok(PhocVector {
        bits,
        config_hash: config.hash(),
    })
}
