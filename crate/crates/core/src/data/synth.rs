//! Synthetic image sets.
//!
//! `shapes` draws one rectangle, disc or cross per image (category uniform)
//! in a bright random colour on a black background, fully inside the frame.
//! The three categories differ in how much of their bounding box they fill
//! (rectangle 1, disc 0.75–0.89, cross ≤ 0.56), which is what
//! [`detect_shape`] measures.
//!
//! `two-gaussians` draws a single bright Gaussian blob centred on one of two
//! fixed points.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    Shapes,
    TwoGaussians,
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shapes" => Ok(SynthKind::Shapes),
            "two-gaussians" | "two-gaussians-image" => Ok(SynthKind::TwoGaussians),
            other => Err(Error::Config(format!("unknown synthetic dataset {other:?}"))),
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthKind::Shapes => "shapes",
            SynthKind::TwoGaussians => "two-gaussians-image",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Rectangle,
    Disc,
    Cross,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [ShapeKind::Rectangle, ShapeKind::Disc, ShapeKind::Cross];

    pub fn index(self) -> usize {
        self as usize
    }
}

const BACKGROUND: f32 = -1.0;

fn check_side(side: usize) -> Result<()> {
    if side == 16 || side == 32 {
        Ok(())
    } else {
        Err(Error::Config(format!("synthetic images must be 16 or 32 pixels wide, got {side}")))
    }
}

/// Uniform integer in `lo..=hi`.
fn between(rng: &mut Rng, lo: usize, hi: usize) -> usize {
    lo + rng.below(hi - lo + 1)
}

struct Canvas<'a> {
    img: &'a mut [f32],
    side: usize,
    color: [f32; 3],
}

impl Canvas<'_> {
    fn set(&mut self, x: usize, y: usize) {
        let o = (y * self.side + x) * 3;
        self.img[o..o + 3].copy_from_slice(&self.color);
    }

    fn fill_rect(&mut self, x0: usize, y0: usize, w: usize, h: usize) {
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                self.set(x, y);
            }
        }
    }
}

fn draw_shape(img: &mut [f32], side: usize, kind: ShapeKind, rng: &mut Rng) {
    // Channel intensities in [0.2, 1] keep every foreground pixel clearly
    // above the background.
    let color = [0; 3].map(|_| rng.range_f32(0.2, 1.0));
    let mut c = Canvas { img, side, color };
    match kind {
        ShapeKind::Rectangle => {
            let w = between(rng, 4, side / 2);
            let h = between(rng, 4, side / 2);
            let x0 = rng.below(side - w + 1);
            let y0 = rng.below(side - h + 1);
            c.fill_rect(x0, y0, w, h);
        }
        ShapeKind::Disc => {
            // Diameter d: centre on a pixel corner (even d) or centre (odd d).
            let d = between(rng, 5, side / 2);
            let x0 = rng.below(side - d + 1);
            let y0 = rng.below(side - d + 1);
            let r = d as f64 / 2.0;
            for y in 0..d {
                for x in 0..d {
                    let (dx, dy) = (x as f64 + 0.5 - r, y as f64 + 0.5 - r);
                    if dx * dx + dy * dy <= r * r {
                        c.set(x0 + x, y0 + y);
                    }
                }
            }
        }
        ShapeKind::Cross => {
            let t = between(rng, 2, 3);
            let len = between(rng, 3 * t, (4 * t).min(side));
            let x0 = rng.below(side - len + 1);
            let y0 = rng.below(side - len + 1);
            let offset = (len - t) / 2;
            c.fill_rect(x0, y0 + offset, len, t);
            c.fill_rect(x0 + offset, y0, t, len);
        }
    }
}

/// Shapes dataset together with the category of every image.
pub fn synth_shapes_labeled(n: usize, side: usize, rng: &mut Rng) -> Result<(Dataset, Vec<ShapeKind>)> {
    check_side(side)?;
    let per = side * side * 3;
    let mut data = vec![BACKGROUND; n * per];
    let mut labels = Vec::with_capacity(n);
    for img in data.chunks_exact_mut(per) {
        let kind = ShapeKind::ALL[rng.below(3)];
        draw_shape(img, side, kind, rng);
        labels.push(kind);
    }
    Ok((Dataset::new("shapes", Tensor::new(&[n, side, side, 3], data)?)?, labels))
}

fn two_gaussians(n: usize, side: usize, rng: &mut Rng) -> Result<Dataset> {
    check_side(side)?;
    let s = side as f64;
    let centres = [(s * 0.3, s * 0.3), (s * 0.7, s * 0.7)];
    let sigma = s / 8.0;
    let per = side * side * 3;
    let mut data = vec![0.0f32; n * per];
    for img in data.chunks_exact_mut(per) {
        let (cx, cy) = centres[rng.below(2)];
        for y in 0..side {
            for x in 0..side {
                let d2 = (x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2);
                let v = (2.0 * (-d2 / (2.0 * sigma * sigma)).exp() - 1.0) as f32;
                img[(y * side + x) * 3..][..3].fill(v);
            }
        }
    }
    Dataset::new("two-gaussians", Tensor::new(&[n, side, side, 3], data)?)
}

pub fn synth_dataset(kind: SynthKind, n: usize, side: usize, rng: &mut Rng) -> Result<Dataset> {
    match kind {
        SynthKind::Shapes => Ok(synth_shapes_labeled(n, side, rng)?.0),
        SynthKind::TwoGaussians => two_gaussians(n, side, rng),
    }
}

/// Smallest foreground that is classified at all.
const MIN_FOREGROUND: usize = 9;

/// Classifies one `[side, side, 3]` image by the fraction of its foreground
/// bounding box that is filled; foreground pixels have some channel above 0.
/// Returns `None` for images with too little foreground.
pub fn detect_shape(img: &[f32], side: usize) -> Option<ShapeKind> {
    let (mut x0, mut y0, mut x1, mut y1, mut count) = (side, side, 0, 0, 0usize);
    for y in 0..side {
        for x in 0..side {
            let px = &img[(y * side + x) * 3..][..3];
            if px.iter().any(|&v| v > 0.0) {
                count += 1;
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    if count < MIN_FOREGROUND {
        return None;
    }
    let fill = count as f64 / ((x1 - x0 + 1) * (y1 - y0 + 1)) as f64;
    Some(if fill >= 0.9 {
        ShapeKind::Rectangle
    } else if fill >= 0.65 {
        ShapeKind::Disc
    } else {
        ShapeKind::Cross
    })
}
