//! Random affine transformations used to augment pseudo-labeled training
//! sets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::image::WordImage;

/// One sampled transformation. Angles in degrees, translation in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    pub rotation: f32,
    pub shear: f32,
    pub scale_x: f32,
    pub scale_y: f32,
    pub translate_x: f32,
    pub translate_y: f32,
}

impl AffineParams {
    pub const IDENTITY: AffineParams = AffineParams {
        rotation: 0.0,
        shear: 0.0,
        scale_x: 1.0,
        scale_y: 1.0,
        translate_x: 0.0,
        translate_y: 0.0,
    };
}

/// Sampling bounds for [`sample_affine`]. Mild defaults keep 32-px-high
/// word images legible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineBounds {
    pub rotation: (f32, f32),
    pub shear: (f32, f32),
    pub scale: (f32, f32),
    pub translate: (f32, f32),
}

impl Default for AffineBounds {
    fn default() -> Self {
        Self {
            rotation: (-5.0, 5.0),
            shear: (-0.1, 0.1),
            scale: (0.9, 1.1),
            translate: (-2.0, 2.0),
        }
    }
}

impl AffineBounds {
    pub fn validate(&self) -> Result<(), String> {
        for (name, (lo, hi)) in [
            ("rotation", self.rotation),
            ("shear", self.shear),
            ("scale", self.scale),
            ("translate", self.translate),
        ] {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(format!("invalid {name} bounds [{lo}, {hi}]"));
            }
        }
        if self.scale.0 <= 0.0 {
            return Err("scale bounds must be positive".into());
        }
        Ok(())
    }
}

/// Draws affine parameters uniformly within `bounds`.
pub fn sample_affine(rng: &mut impl Rng, bounds: &AffineBounds) -> AffineParams {
    let mut draw = |(lo, hi): (f32, f32)| {
        if lo == hi {
            lo
        } else {
            rng.gen_range(lo..hi)
        }
    };
    AffineParams {
        rotation: draw(bounds.rotation),
        shear: draw(bounds.shear),
        scale_x: draw(bounds.scale),
        scale_y: draw(bounds.scale),
        translate_x: draw(bounds.translate),
        translate_y: draw(bounds.translate),
    }
}

/// Applies the transformation about the image center with bilinear
/// resampling. Output has the input's dimensions; pixels mapped from outside
/// the frame are 0. Identity parameters reproduce the input exactly.
pub fn apply_affine(image: &WordImage, params: &AffineParams) -> WordImage {
    let h = image.height();
    let w = image.width();
    let cy = (h as f32 - 1.0) / 2.0;
    let cx = (w as f32 - 1.0) / 2.0;

    // forward matrix M = R(rot) * Shear * Scale, (x right, y down)
    let theta = params.rotation.to_radians();
    let (sin, cos) = theta.sin_cos();
    let (sx, sy) = (params.scale_x, params.scale_y);
    let k = params.shear;
    // R * Sh = [cos, cos*k - sin; sin, sin*k + cos], then column scaling
    let m00 = cos * sx;
    let m01 = (cos * k - sin) * sy;
    let m10 = sin * sx;
    let m11 = (sin * k + cos) * sy;
    let det = m00 * m11 - m01 * m10;
    assert!(det.abs() > 1e-12, "degenerate affine transform");
    let (i00, i01, i10, i11) = (m11 / det, -m01 / det, -m10 / det, m00 / det);

    let mut out = WordImage::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            let dx = c as f32 - cx - params.translate_x;
            let dy = r as f32 - cy - params.translate_y;
            let src_x = i00 * dx + i01 * dy + cx;
            let src_y = i10 * dx + i11 * dy + cy;
            out.set(r, c, image.sample(src_y, src_x));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_ink(h: usize, w: usize, r: usize, c: usize) -> WordImage {
        let mut img = WordImage::zeros(h, w);
        img.set(r, c, 1.0);
        img
    }

    #[test]
    fn identity_is_exact() {
        let mut img = WordImage::zeros(5, 7);
        for r in 0..5 {
            for c in 0..7 {
                img.set(r, c, ((r * 7 + c) as f32) / 34.0);
            }
        }
        assert_eq!(apply_affine(&img, &AffineParams::IDENTITY), img);
    }

    #[test]
    fn pure_translation_shifts_ink() {
        let img = single_ink(8, 8, 3, 2);
        let params = AffineParams {
            translate_x: 2.0,
            ..AffineParams::IDENTITY
        };
        let out = apply_affine(&img, &params);
        assert_eq!(out.get(3, 4), 1.0);
        assert_eq!(out.pixels().iter().filter(|&&v| v > 0.0).count(), 1);
    }

    #[test]
    fn half_turn_point_reflects() {
        let mut img = WordImage::zeros(3, 3);
        img.set(0, 0, 1.0);
        img.set(0, 1, 0.5);
        let params = AffineParams {
            rotation: 180.0,
            ..AffineParams::IDENTITY
        };
        let out = apply_affine(&img, &params);
        assert!((out.get(2, 2) - 1.0).abs() < 1e-5);
        assert!((out.get(2, 1) - 0.5).abs() < 1e-5);
        assert!(out.get(0, 0).abs() < 1e-5);
    }

    #[test]
    fn sampling_respects_bounds() {
        let bounds = AffineBounds::default();
        let mut rng = crate::rng::substream(3, "affine-test");
        for _ in 0..200 {
            let p = sample_affine(&mut rng, &bounds);
            assert!(p.rotation >= -5.0 && p.rotation < 5.0);
            assert!(p.shear >= -0.1 && p.shear < 0.1);
            assert!(p.scale_x >= 0.9 && p.scale_x < 1.1);
            assert!(p.translate_y >= -2.0 && p.translate_y < 2.0);
        }
    }

    #[test]
    fn bounds_validation() {
        let mut b = AffineBounds::default();
        assert!(b.validate().is_ok());
        b.scale = (1.1, 0.9);
        assert!(b.validate().is_err());
        b.scale = (-0.5, 0.5);
        assert!(b.validate().is_err());
    }
}
