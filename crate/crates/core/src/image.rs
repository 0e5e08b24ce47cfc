//! Word-image representation and file I/O.
//!
//! Images are row-major grayscale with intensities in `[0, 1]` and the
//! ink-as-one convention: after normalization the writing is bright on a dark
//! background. On disk images are binary 8-bit PGM (P5, maxval 255).

use std::fs;
use std::io::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed image: {0}")]
    MalformedImage(String),
    #[error("image dimensions must be positive")]
    EmptyImage,
}

/// Normalized grayscale word image.
#[derive(Debug, Clone, PartialEq)]
pub struct WordImage {
    pixels: Vec<f32>,
    height: usize,
    width: usize,
}

impl WordImage {
    pub fn new(pixels: Vec<f32>, height: usize, width: usize) -> Result<Self, ImageError> {
        if height == 0 || width == 0 {
            return Err(ImageError::EmptyImage);
        }
        if pixels.len() != height * width {
            return Err(ImageError::MalformedImage(format!(
                "expected {} pixels, got {}",
                height * width,
                pixels.len()
            )));
        }
        if pixels.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(ImageError::MalformedImage("pixel outside [0,1]".into()));
        }
        Ok(Self {
            pixels,
            height,
            width,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            pixels: vec![0.0; height * width],
            height,
            width,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f32) {
        self.pixels[row * self.width + col] = value.clamp(0.0, 1.0);
    }

    /// Bilinear sample at fractional coordinates; outside the frame reads 0.
    pub fn sample(&self, row: f32, col: f32) -> f32 {
        let r0 = row.floor();
        let c0 = col.floor();
        let fr = row - r0;
        let fc = col - c0;
        let mut acc = 0.0f32;
        for (dr, wr) in [(0i64, 1.0 - fr), (1, fr)] {
            if wr == 0.0 {
                continue;
            }
            for (dc, wc) in [(0i64, 1.0 - fc), (1, fc)] {
                if wc == 0.0 {
                    continue;
                }
                let r = r0 as i64 + dr;
                let c = c0 as i64 + dc;
                if r >= 0 && c >= 0 && (r as usize) < self.height && (c as usize) < self.width {
                    acc += wr * wc * self.get(r as usize, c as usize);
                }
            }
        }
        acc
    }

    /// Bilinear rescale to exactly `new_h` x `new_w`.
    pub fn resize(&self, new_h: usize, new_w: usize) -> WordImage {
        assert!(new_h > 0 && new_w > 0);
        let mut out = WordImage::zeros(new_h, new_w);
        let sr = self.height as f32 / new_h as f32;
        let sc = self.width as f32 / new_w as f32;
        for r in 0..new_h {
            // map the output pixel center back to source coordinates
            let src_r = ((r as f32 + 0.5) * sr - 0.5).clamp(0.0, self.height as f32 - 1.0);
            for c in 0..new_w {
                let src_c = ((c as f32 + 0.5) * sc - 0.5).clamp(0.0, self.width as f32 - 1.0);
                out.set(r, c, self.sample(src_r, src_c));
            }
        }
        out
    }
}

/// Reads a binary PGM (P5) file; 8-bit values map linearly onto [0,1].
pub fn read_image(path: impl AsRef<Path>) -> Result<WordImage, ImageError> {
    let data = fs::read(path)?;
    parse_pgm(&data)
}

fn parse_pgm(data: &[u8]) -> Result<WordImage, ImageError> {
    let mut pos = 0usize;
    let mut token = |data: &[u8]| -> Result<String, ImageError> {
        // skip whitespace and '#' comment lines
        loop {
            while pos < data.len() && data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < data.len() && data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(ImageError::MalformedImage("truncated header".into()));
        }
        Ok(String::from_utf8_lossy(&data[start..pos]).into_owned())
    };

    if token(data)? != "P5" {
        return Err(ImageError::MalformedImage("not a P5 pgm".into()));
    }
    let width: usize = token(data)?
        .parse()
        .map_err(|_| ImageError::MalformedImage("bad width".into()))?;
    let height: usize = token(data)?
        .parse()
        .map_err(|_| ImageError::MalformedImage("bad height".into()))?;
    let maxval: usize = token(data)?
        .parse()
        .map_err(|_| ImageError::MalformedImage("bad maxval".into()))?;
    if maxval != 255 {
        return Err(ImageError::MalformedImage(format!(
            "unsupported maxval {maxval}"
        )));
    }
    if width == 0 || height == 0 {
        return Err(ImageError::EmptyImage);
    }
    // single whitespace byte separates header and raster
    pos += 1;
    let need = width * height;
    let raster = data
        .get(pos..pos + need)
        .ok_or_else(|| ImageError::MalformedImage("truncated raster".into()))?;
    let pixels = raster.iter().map(|&b| b as f32 / 255.0).collect();
    WordImage::new(pixels, height, width)
}

/// Writes a binary PGM (P5, maxval 255). Round-trips 8-bit data losslessly.
pub fn write_image(image: &WordImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let mut out = Vec::with_capacity(image.pixels.len() + 32);
    write!(out, "P5\n{} {}\n255\n", image.width, image.height)?;
    out.extend(
        image
            .pixels
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    fs::write(path, out)?;
    Ok(())
}

/// Normalizes an image into a fixed box: optional polarity inversion
/// (`v -> 1 - v`), aspect-preserving bilinear rescale to fit
/// `target_h` x `target_w`, then background padding (value 0) centered in the
/// box.
pub fn normalize(image: &WordImage, target_h: usize, target_w: usize, invert: bool) -> WordImage {
    assert!(target_h > 0 && target_w > 0);
    let src = if invert {
        let pixels = image.pixels.iter().map(|&v| 1.0 - v).collect();
        WordImage {
            pixels,
            height: image.height,
            width: image.width,
        }
    } else {
        image.clone()
    };
    let scale = (target_h as f32 / src.height as f32).min(target_w as f32 / src.width as f32);
    let new_h = ((src.height as f32 * scale) as usize).clamp(1, target_h);
    let new_w = ((src.width as f32 * scale) as usize).clamp(1, target_w);
    let scaled = src.resize(new_h, new_w);
    let mut out = WordImage::zeros(target_h, target_w);
    let off_r = (target_h - new_h) / 2;
    let off_c = (target_w - new_w) / 2;
    for r in 0..new_h {
        for c in 0..new_w {
            out.set(off_r + r, off_c + c, scaled.get(r, c));
        }
    }
    out
}
