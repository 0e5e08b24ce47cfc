//! Built-in vector glyph sets.
//!
//! Each glyph is a set of polyline strokes in the unit box (x right, y
//! down). The angular set is hand-authored from straight segments; the
//! rounded set is derived from it by corner smoothing, horizontal
//! compression and serif ticks, which gives a second, visibly different
//! letterform family without external font files.

use std::collections::HashMap;

pub type Stroke = Vec<(f32, f32)>;

/// Selector among the built-in glyph sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GlyphVariant {
    Angular,
    Rounded,
}

/// Per-symbol stroke descriptions.
#[derive(Debug, Clone)]
pub struct GlyphSet {
    glyphs: HashMap<char, Vec<Stroke>>,
}

impl GlyphSet {
    pub fn builtin(variant: GlyphVariant) -> Self {
        let mut glyphs = HashMap::new();
        for c in ('a'..='z').chain('0'..='9') {
            let strokes = angular_strokes(c);
            let strokes = match variant {
                GlyphVariant::Angular => strokes,
                GlyphVariant::Rounded => round_glyph(strokes),
            };
            glyphs.insert(c, strokes);
        }
        Self { glyphs }
    }

    pub fn strokes(&self, c: char) -> Option<&[Stroke]> {
        self.glyphs.get(&c).map(Vec::as_slice)
    }

    pub fn symbols(&self) -> impl Iterator<Item = char> + '_ {
        self.glyphs.keys().copied()
    }
}

fn s(points: &[(f32, f32)]) -> Stroke {
    points.to_vec()
}

fn angular_strokes(c: char) -> Vec<Stroke> {
    match c {
        'a' => vec![
            s(&[(0.0, 1.0), (0.5, 0.0), (1.0, 1.0)]),
            s(&[(0.25, 0.55), (0.75, 0.55)]),
        ],
        'b' => vec![
            s(&[(0.0, 0.0), (0.0, 1.0)]),
            s(&[(0.0, 0.0), (0.75, 0.0), (0.9, 0.15), (0.75, 0.45), (0.0, 0.5)]),
            s(&[(0.0, 0.5), (0.85, 0.55), (0.95, 0.75), (0.8, 1.0), (0.0, 1.0)]),
        ],
        'c' => vec![s(&[
            (1.0, 0.15),
            (0.6, 0.0),
            (0.2, 0.15),
            (0.0, 0.5),
            (0.2, 0.85),
            (0.6, 1.0),
            (1.0, 0.85),
        ])],
        'd' => vec![
            s(&[(0.0, 0.0), (0.0, 1.0)]),
            s(&[(0.0, 0.0), (0.6, 0.05), (1.0, 0.35), (1.0, 0.65), (0.6, 0.95), (0.0, 1.0)]),
        ],
        'e' => vec![
            s(&[(1.0, 0.0), (0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]),
            s(&[(0.0, 0.5), (0.7, 0.5)]),
        ],
        'f' => vec![
            s(&[(1.0, 0.0), (0.0, 0.0), (0.0, 1.0)]),
            s(&[(0.0, 0.5), (0.7, 0.5)]),
        ],
        'g' => vec![s(&[
            (1.0, 0.15),
            (0.6, 0.0),
            (0.2, 0.15),
            (0.0, 0.5),
            (0.2, 0.85),
            (0.6, 1.0),
            (1.0, 0.85),
            (1.0, 0.55),
            (0.6, 0.55),
        ])],
        'h' => vec![
            s(&[(0.0, 0.0), (0.0, 1.0)]),
            s(&[(1.0, 0.0), (1.0, 1.0)]),
            s(&[(0.0, 0.5), (1.0, 0.5)]),
        ],
        'i' => vec![
            s(&[(0.2, 0.0), (0.8, 0.0)]),
            s(&[(0.5, 0.0), (0.5, 1.0)]),
            s(&[(0.2, 1.0), (0.8, 1.0)]),
        ],
        'j' => vec![
            s(&[(0.3, 0.0), (0.9, 0.0)]),
            s(&[(0.7, 0.0), (0.7, 0.8), (0.5, 1.0), (0.2, 1.0), (0.05, 0.8)]),
        ],
        'k' => vec![
            s(&[(0.0, 0.0), (0.0, 1.0)]),
            s(&[(1.0, 0.0), (0.0, 0.5), (1.0, 1.0)]),
        ],
        'l' => vec![s(&[(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)])],
        'm' => vec![s(&[(0.0, 1.0), (0.0, 0.0), (0.5, 0.6), (1.0, 0.0), (1.0, 1.0)])],
        'n' => vec![s(&[(0.0, 1.0), (0.0, 0.0), (1.0, 1.0), (1.0, 0.0)])],
        'o' => vec![s(&[
            (0.5, 0.0),
            (0.1, 0.2),
            (0.0, 0.5),
            (0.1, 0.8),
            (0.5, 1.0),
            (0.9, 0.8),
            (1.0, 0.5),
            (0.9, 0.2),
            (0.5, 0.0),
        ])],
        'p' => vec![s(&[
            (0.0, 1.0),
            (0.0, 0.0),
            (0.8, 0.0),
            (1.0, 0.25),
            (0.8, 0.5),
            (0.0, 0.5),
        ])],
        'q' => vec![
            s(&[
                (0.5, 0.0),
                (0.1, 0.2),
                (0.0, 0.5),
                (0.1, 0.8),
                (0.5, 1.0),
                (0.9, 0.8),
                (1.0, 0.5),
                (0.9, 0.2),
                (0.5, 0.0),
            ]),
            s(&[(0.65, 0.7), (1.0, 1.0)]),
        ],
        'r' => vec![
            s(&[
                (0.0, 1.0),
                (0.0, 0.0),
                (0.8, 0.0),
                (1.0, 0.25),
                (0.8, 0.5),
                (0.0, 0.5),
            ]),
            s(&[(0.4, 0.5), (1.0, 1.0)]),
        ],
        's' => vec![s(&[
            (1.0, 0.12),
            (0.6, 0.0),
            (0.2, 0.1),
            (0.1, 0.3),
            (0.5, 0.5),
            (0.9, 0.7),
            (0.8, 0.9),
            (0.4, 1.0),
            (0.0, 0.88),
        ])],
        't' => vec![
            s(&[(0.0, 0.0), (1.0, 0.0)]),
            s(&[(0.5, 0.0), (0.5, 1.0)]),
        ],
        'u' => vec![s(&[
            (0.0, 0.0),
            (0.0, 0.7),
            (0.2, 0.95),
            (0.5, 1.0),
            (0.8, 0.95),
            (1.0, 0.7),
            (1.0, 0.0),
        ])],
        'v' => vec![s(&[(0.0, 0.0), (0.5, 1.0), (1.0, 0.0)])],
        'w' => vec![s(&[
            (0.0, 0.0),
            (0.25, 1.0),
            (0.5, 0.4),
            (0.75, 1.0),
            (1.0, 0.0),
        ])],
        'x' => vec![
            s(&[(0.0, 0.0), (1.0, 1.0)]),
            s(&[(1.0, 0.0), (0.0, 1.0)]),
        ],
        'y' => vec![
            s(&[(0.0, 0.0), (0.5, 0.5), (1.0, 0.0)]),
            s(&[(0.5, 0.5), (0.5, 1.0)]),
        ],
        'z' => vec![s(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)])],
        '0' => vec![
            s(&[
                (0.5, 0.0),
                (0.1, 0.2),
                (0.0, 0.5),
                (0.1, 0.8),
                (0.5, 1.0),
                (0.9, 0.8),
                (1.0, 0.5),
                (0.9, 0.2),
                (0.5, 0.0),
            ]),
            s(&[(0.3, 0.7), (0.7, 0.3)]),
        ],
        '1' => vec![
            s(&[(0.25, 0.25), (0.55, 0.0), (0.55, 1.0)]),
            s(&[(0.25, 1.0), (0.85, 1.0)]),
        ],
        '2' => vec![s(&[
            (0.05, 0.2),
            (0.3, 0.0),
            (0.75, 0.0),
            (0.95, 0.2),
            (0.9, 0.45),
            (0.0, 1.0),
            (1.0, 1.0),
        ])],
        '3' => vec![s(&[
            (0.05, 0.1),
            (0.5, 0.0),
            (0.9, 0.1),
            (0.9, 0.4),
            (0.45, 0.5),
            (0.9, 0.6),
            (0.9, 0.9),
            (0.5, 1.0),
            (0.05, 0.9),
        ])],
        '4' => vec![s(&[(0.7, 1.0), (0.7, 0.0), (0.0, 0.7), (1.0, 0.7)])],
        '5' => vec![s(&[
            (0.9, 0.0),
            (0.1, 0.0),
            (0.1, 0.45),
            (0.6, 0.4),
            (0.95, 0.6),
            (0.9, 0.85),
            (0.5, 1.0),
            (0.05, 0.9),
        ])],
        '6' => vec![s(&[
            (0.8, 0.0),
            (0.3, 0.3),
            (0.05, 0.7),
            (0.15, 0.9),
            (0.5, 1.0),
            (0.85, 0.9),
            (0.95, 0.7),
            (0.8, 0.5),
            (0.4, 0.5),
            (0.1, 0.65),
        ])],
        '7' => vec![s(&[(0.0, 0.0), (1.0, 0.0), (0.4, 1.0)])],
        '8' => vec![s(&[
            (0.5, 0.5),
            (0.15, 0.35),
            (0.15, 0.12),
            (0.5, 0.0),
            (0.85, 0.12),
            (0.85, 0.35),
            (0.5, 0.5),
            (0.1, 0.68),
            (0.1, 0.9),
            (0.5, 1.0),
            (0.9, 0.9),
            (0.9, 0.68),
            (0.5, 0.5),
        ])],
        '9' => vec![s(&[
            (0.2, 1.0),
            (0.7, 0.7),
            (0.95, 0.3),
            (0.85, 0.1),
            (0.5, 0.0),
            (0.15, 0.1),
            (0.05, 0.3),
            (0.2, 0.5),
            (0.6, 0.5),
            (0.9, 0.35),
        ])],
        _ => vec![],
    }
}

/// One round of Chaikin corner cutting.
fn chaikin(stroke: &Stroke) -> Stroke {
    if stroke.len() < 3 {
        return stroke.clone();
    }
    let mut out = Vec::with_capacity(stroke.len() * 2);
    out.push(stroke[0]);
    for w in stroke.windows(2) {
        let (a, b) = (w[0], w[1]);
        out.push((0.75 * a.0 + 0.25 * b.0, 0.75 * a.1 + 0.25 * b.1));
        out.push((0.25 * a.0 + 0.75 * b.0, 0.25 * a.1 + 0.75 * b.1));
    }
    out.push(stroke[stroke.len() - 1]);
    out
}

/// Derives the rounded letterforms: smoothed corners, narrower body, serif
/// ticks on strokes that terminate at the top or bottom of the box.
fn round_glyph(strokes: Vec<Stroke>) -> Vec<Stroke> {
    let compress = |p: (f32, f32)| (0.12 + p.0 * 0.76, p.1);
    let mut out = Vec::new();
    let mut serifs = Vec::new();
    for stroke in &strokes {
        let smooth: Stroke = chaikin(&chaikin(stroke)).into_iter().map(compress).collect();
        for &end in [smooth.first(), smooth.last()].iter().flatten() {
            if end.1 < 0.15 || end.1 > 0.85 {
                let x0 = (end.0 - 0.14).max(0.0);
                let x1 = (end.0 + 0.14).min(1.0);
                serifs.push(vec![(x0, end.1), (x1, end.1)]);
            }
        }
        out.push(smooth);
    }
    out.extend(serifs);
    out
}
