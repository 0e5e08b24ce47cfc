//! Procedural generation of labeled synthetic word images.
//!
//! Stands in for a font-rendered training corpus: words are rasterized from
//! built-in vector glyphs under controllable style families (stroke width,
//! slant, spacing, jitter, noise, letterform variant). Two sufficiently
//! different families reproduce the source/target domain gap the adaptation
//! loop has to bridge.

mod glyphs;

pub use glyphs::{GlyphSet, GlyphVariant, Stroke};

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Manifest, ManifestEntry};
use crate::image::{write_image, ImageError, WordImage};
use crate::phoc::Alphabet;
use crate::rng::substream_indexed;

/// Base render height in pixels before scale jitter.
pub const BASE_HEIGHT: usize = 48;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("word contains no alphabet characters")]
    EmptyWord,
    #[error("invalid style `{style}`: {field} {reason}")]
    InvalidStyle {
        style: String,
        field: &'static str,
        reason: String,
    },
    #[error("word list is empty")]
    EmptyWordlist,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// A distribution over rendering parameters; each render samples within
/// these ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleFamily {
    pub id: String,
    /// Stroke thickness in pixels.
    pub stroke_width: (f32, f32),
    /// Italic slant in degrees.
    pub slant: (f32, f32),
    /// Gap between character boxes in pixels (may be negative).
    pub char_spacing: (f32, f32),
    /// Per-character vertical offset in pixels.
    pub baseline_jitter: (f32, f32),
    /// Uniform pixel noise amplitude.
    pub noise_amplitude: (f32, f32),
    pub glyph_variant: GlyphVariant,
}

impl StyleFamily {
    /// Upright angular writing; the stand-in source domain.
    pub fn angular_default() -> Self {
        Self {
            id: "angular".into(),
            stroke_width: (1.6, 2.4),
            slant: (-2.0, 2.0),
            char_spacing: (2.0, 5.0),
            baseline_jitter: (-1.0, 1.0),
            noise_amplitude: (0.0, 0.05),
            glyph_variant: GlyphVariant::Angular,
        }
    }

    /// Slanted rounded writing with heavier strokes; the stand-in target
    /// domain.
    pub fn rounded_default() -> Self {
        Self {
            id: "rounded".into(),
            stroke_width: (2.8, 4.0),
            slant: (8.0, 14.0),
            char_spacing: (0.0, 3.0),
            baseline_jitter: (-2.5, 2.5),
            noise_amplitude: (0.03, 0.10),
            glyph_variant: GlyphVariant::Rounded,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let check = |field: &'static str,
                     (lo, hi): (f32, f32),
                     min: f32,
                     max: f32|
         -> Result<(), SynthError> {
            if !(lo <= hi) || lo < min || hi > max {
                return Err(SynthError::InvalidStyle {
                    style: self.id.clone(),
                    field,
                    reason: format!("range [{lo}, {hi}] outside [{min}, {max}] or inverted"),
                });
            }
            Ok(())
        };
        check("stroke_width", self.stroke_width, 0.5, 8.0)?;
        check("slant", self.slant, -20.0, 20.0)?;
        check("char_spacing", self.char_spacing, -4.0, 20.0)?;
        check("baseline_jitter", self.baseline_jitter, -6.0, 6.0)?;
        check("noise_amplitude", self.noise_amplitude, 0.0, 0.5)?;
        Ok(())
    }
}

fn draw(rng: &mut impl Rng, (lo, hi): (f32, f32)) -> f32 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

fn stamp_segment(img: &mut WordImage, a: (f32, f32), b: (f32, f32), width: f32) {
    let half = width / 2.0;
    let pad = half + 1.5;
    let min_x = (a.0.min(b.0) - pad).floor().max(0.0) as usize;
    let max_x = (a.0.max(b.0) + pad).ceil().min(img.width() as f32 - 1.0) as usize;
    let min_y = (a.1.min(b.1) - pad).floor().max(0.0) as usize;
    let max_y = (a.1.max(b.1) + pad).ceil().min(img.height() as f32 - 1.0) as usize;
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len_sq = dx * dx + dy * dy;
    for y in min_y..=max_y {
        for x in min_x..=max_x {
            let (px, py) = (x as f32, y as f32);
            let t = if len_sq == 0.0 {
                0.0
            } else {
                (((px - a.0) * dx + (py - a.1) * dy) / len_sq).clamp(0.0, 1.0)
            };
            let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
            let dist = ((px - cx).powi(2) + (py - cy).powi(2)).sqrt();
            let cov = (half + 0.5 - dist).clamp(0.0, 1.0);
            if cov > img.get(y, x) {
                img.set(y, x, cov);
            }
        }
    }
}

/// Rasterizes one word, ink-as-one on a black background, sampling style
/// parameters from the family's ranges. Deterministic given the rng state.
pub fn render_word(
    word: &str,
    style: &StyleFamily,
    rng: &mut impl Rng,
) -> Result<WordImage, SynthError> {
    style.validate()?;
    let alphabet = Alphabet::latin_digits();
    let canon = alphabet.canonicalize(word);
    if canon.is_empty() {
        return Err(SynthError::EmptyWord);
    }
    let glyphs = GlyphSet::builtin(style.glyph_variant);

    let h = BASE_HEIGHT as f32;
    let glyph_h = 0.70 * h;
    let glyph_w = 0.60 * h;
    let top = 0.15 * h;

    let stroke_width = draw(rng, style.stroke_width);
    let slant = draw(rng, style.slant).to_radians();
    let spacing = draw(rng, style.char_spacing);
    let noise_amp = draw(rng, style.noise_amplitude);

    let n = canon.chars().count();
    let shear_span = (slant.tan().abs() * h).ceil();
    let pad = stroke_width + 2.0 + shear_span;
    let width =
        (n as f32 * glyph_w + (n as f32 - 1.0) * spacing + 2.0 * pad).ceil().max(8.0) as usize;
    let mut img = WordImage::zeros(BASE_HEIGHT, width);

    let baseline = top + glyph_h;
    for (i, c) in canon.chars().enumerate() {
        let jitter = draw(rng, style.baseline_jitter);
        let x0 = pad + i as f32 * (glyph_w + spacing);
        let strokes = glyphs.strokes(c).expect("canonical char has a glyph");
        for stroke in strokes {
            let mapped: Vec<(f32, f32)> = stroke
                .iter()
                .map(|&(sx, sy)| {
                    let y = top + sy * glyph_h + jitter;
                    let x = x0 + sx * glyph_w + slant.tan() * (baseline - y);
                    (x, y)
                })
                .collect();
            for seg in mapped.windows(2) {
                stamp_segment(&mut img, seg[0], seg[1], stroke_width);
            }
        }
    }

    if noise_amp > 0.0 {
        for y in 0..img.height() {
            for x in 0..img.width() {
                let v = img.get(y, x) + rng.gen_range(-noise_amp..noise_amp);
                img.set(y, x, v);
            }
        }
    }
    Ok(img)
}

/// Renders `per_word` images per word, each upscaled by an independent
/// factor uniform in `[1, 2)` when `scale_jitter` is set, writes them as PGM
/// files under `out_dir` together with a `manifest.tsv`, and returns the
/// manifest.
///
/// Files are written scan-style, dark ink on a light background, so corpora
/// look like real document crops; loaders invert on read (see
/// `image::normalize`) to recover the internal ink-as-one convention.
pub fn generate_corpus<S: AsRef<str>>(
    wordlist: &[S],
    per_word: usize,
    style: &StyleFamily,
    scale_jitter: bool,
    out_dir: impl AsRef<Path>,
    seed: u64,
) -> Result<Manifest, SynthError> {
    if wordlist.is_empty() {
        return Err(SynthError::EmptyWordlist);
    }
    style.validate()?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;

    let alphabet = Alphabet::latin_digits();
    let mut entries = Vec::with_capacity(wordlist.len() * per_word);
    let mut index = 0u64;
    for word in wordlist {
        let canon = alphabet.canonicalize(word.as_ref());
        if canon.is_empty() {
            return Err(SynthError::EmptyWord);
        }
        for _ in 0..per_word {
            let mut rng = substream_indexed(seed, "synth", index);
            let mut img = render_word(&canon, style, &mut rng)?;
            if scale_jitter {
                let factor: f32 = rng.gen_range(1.0..2.0);
                let nh = (img.height() as f32 * factor).round() as usize;
                let nw = (img.width() as f32 * factor).round() as usize;
                img = img.resize(nh, nw);
            }
            let file = format!("{index:05}_{canon}.pgm");
            let scan = WordImage::new(
                img.pixels().iter().map(|&p| 1.0 - p.clamp(0.0, 1.0)).collect(),
                img.height(),
                img.width(),
            )
            .expect("dimensions preserved");
            write_image(&scan, out_dir.join(&file))?;
            entries.push(ManifestEntry {
                image_path: file,
                transcription: Some(canon.clone()),
            });
            index += 1;
        }
    }
    let manifest = Manifest::new(out_dir, entries);
    manifest
        .save(out_dir.join("manifest.tsv"))
        .map_err(|e| SynthError::Io(std::io::Error::other(e.to_string())))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::read_image;
    use crate::rng::substream;

    fn fixed_style() -> StyleFamily {
        StyleFamily {
            id: "fixed".into(),
            stroke_width: (2.0, 2.0),
            slant: (0.0, 0.0),
            char_spacing: (3.0, 3.0),
            baseline_jitter: (0.0, 0.0),
            noise_amplitude: (0.0, 0.0),
            glyph_variant: GlyphVariant::Angular,
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let style = StyleFamily::rounded_default();
        let a = render_word("washington", &style, &mut substream(1, "r")).unwrap();
        let b = render_word("washington", &style, &mut substream(1, "r")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn longer_words_render_wider() {
        let style = fixed_style();
        let a = render_word("a", &style, &mut substream(2, "r")).unwrap();
        let ab = render_word("ab", &style, &mut substream(2, "r")).unwrap();
        assert!(ab.width() > a.width());
        assert_eq!(a.height(), BASE_HEIGHT);
    }

    #[test]
    fn renders_contain_ink_and_respect_range() {
        for style in [StyleFamily::angular_default(), StyleFamily::rounded_default()] {
            let img = render_word("query", &style, &mut substream(3, "r")).unwrap();
            assert!(img.pixels().iter().all(|&v| (0.0..=1.0).contains(&v)));
            let ink: f32 = img.pixels().iter().sum();
            assert!(ink > 10.0, "{}: ink mass {ink}", style.id);
        }
    }

    #[test]
    fn empty_word_rejected() {
        let style = fixed_style();
        assert!(matches!(
            render_word("!!!", &style, &mut substream(0, "r")),
            Err(SynthError::EmptyWord)
        ));
    }

    #[test]
    fn invalid_style_names_field() {
        let mut style = fixed_style();
        style.stroke_width = (0.0, 12.0);
        let err = render_word("a", &style, &mut substream(0, "r")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("stroke_width"), "{msg}");
    }

    #[test]
    fn corpus_generation_writes_manifest_and_images() {
        let dir = tempfile::tempdir().unwrap();
        let words = ["the", "of", "and", "to", "in", "was", "his", "that", "with", "for"];
        let manifest =
            generate_corpus(&words, 3, &StyleFamily::angular_default(), true, dir.path(), 7)
                .unwrap();
        assert_eq!(manifest.len(), 30);
        for entry in &manifest.entries {
            let img = read_image(manifest.resolve(entry)).unwrap();
            assert!(img.height() >= BASE_HEIGHT);
        }
        let reloaded = Manifest::load(dir.path().join("manifest.tsv")).unwrap();
        assert_eq!(reloaded.entries, manifest.entries);
    }

    #[test]
    fn corpus_generation_is_byte_reproducible() {
        let words = ["stone", "river"];
        let style = StyleFamily::rounded_default();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let m1 = generate_corpus(&words, 2, &style, true, d1.path(), 42).unwrap();
        let m2 = generate_corpus(&words, 2, &style, true, d2.path(), 42).unwrap();
        for (e1, e2) in m1.entries.iter().zip(&m2.entries) {
            let b1 = std::fs::read(m1.resolve(e1)).unwrap();
            let b2 = std::fs::read(m2.resolve(e2)).unwrap();
            assert_eq!(b1, b2);
        }
    }

    #[test]
    fn scale_jitter_off_keeps_base_height() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_corpus(&["abc"], 3, &fixed_style(), false, dir.path(), 5).unwrap();
        for e in &m.entries {
            assert_eq!(read_image(m.resolve(e)).unwrap().height(), BASE_HEIGHT);
        }
    }

    #[test]
    fn style_families_are_measurably_different() {
        // mean per-pixel L1 between families exceeds the within-family
        // distance, averaged over >= 50 words
        let words: Vec<String> = ["the", "and", "for", "was", "with", "his", "from", "this",
            "have", "word", "image", "query", "model", "train", "lower", "upper", "stone",
            "river", "mount", "plain", "horse", "paper", "glass", "green", "house", "light",
            "night", "water", "earth", "field", "north", "south", "east", "west", "point",
            "round", "sound", "small", "large", "world", "young", "early", "often", "again",
            "never", "about", "after", "other", "which", "there", "first"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert!(words.len() >= 50);
        let fam_a = StyleFamily::angular_default();
        let fam_b = StyleFamily::rounded_default();
        let norm = |img: &WordImage| crate::image::normalize(img, 32, 96, false);
        let l1 = |a: &WordImage, b: &WordImage| -> f64 {
            a.pixels()
                .iter()
                .zip(b.pixels())
                .map(|(&x, &y)| (x - y).abs() as f64)
                .sum::<f64>()
                / a.pixels().len() as f64
        };
        let mut within = 0.0;
        let mut between = 0.0;
        for (i, w) in words.iter().enumerate() {
            let a1 = norm(&render_word(w, &fam_a, &mut substream(i as u64, "a1")).unwrap());
            let a2 = norm(&render_word(w, &fam_a, &mut substream(i as u64, "a2")).unwrap());
            let b1 = norm(&render_word(w, &fam_b, &mut substream(i as u64, "b1")).unwrap());
            within += l1(&a1, &a2);
            between += l1(&a1, &b1);
        }
        assert!(
            between > within,
            "between {between:.3} !> within {within:.3}"
        );
    }
}
