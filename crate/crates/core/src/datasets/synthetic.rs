//! Procedural stroke glyphs standing in for handwritten digits.
//!
//! Ten classes of simple shapes (rings, bars, crosses, corners) are drawn
//! with a random similarity transform and stroke width, anti-aliased by
//! distance to the stroke centre line.

use std::f64::consts::PI;

use rand::Rng;

use crate::datasets::transforms::resize_bilinear;
use crate::datasets::ImageCorpus;
use crate::error::{Error, Result};
use crate::rng::{permutation, Rng64};
use crate::tensor::Tensor;

pub const CLASSES: usize = 10;

type Polyline = Vec<(f64, f64)>;

fn ellipse(rx: f64, ry: f64) -> Polyline {
    (0..=32)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / 32.0;
            (rx * t.cos(), ry * t.sin())
        })
        .collect()
}

/// Centre lines in `[-1, 1]^2`, y pointing down.
fn glyph(class: usize) -> Vec<Polyline> {
    match class {
        0 => vec![ellipse(0.7, 1.0)],
        1 => vec![vec![(0.0, -1.0), (0.0, 1.0)]],
        2 => vec![vec![(-0.7, -1.0), (0.7, -1.0), (-0.7, 1.0), (0.7, 1.0)]],
        3 => vec![vec![(0.0, -1.0), (0.0, 1.0)], vec![(-0.9, 0.0), (0.9, 0.0)]],
        4 => vec![vec![(-0.8, -1.0), (0.8, 1.0)], vec![(0.8, -1.0), (-0.8, 1.0)]],
        5 => vec![vec![(-0.8, -0.8), (0.8, -0.8), (0.8, 0.8), (-0.8, 0.8), (-0.8, -0.8)]],
        6 => vec![vec![(-0.8, -1.0), (0.8, -1.0)], vec![(0.0, -1.0), (0.0, 1.0)]],
        7 => vec![vec![(-0.7, -1.0), (0.7, -1.0), (-0.2, 1.0)]],
        8 => vec![ellipse(0.7, 1.0), vec![(-0.7, 0.0), (0.7, 0.0)]],
        _ => vec![vec![(-0.6, -1.0), (-0.6, 1.0), (0.7, 1.0)]],
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let (wx, wy) = (p.0 - a.0, p.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 { ((wx * vx + wy * vy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (dx, dy) = (wx - t * vx, wy - t * vy);
    (dx * dx + dy * dy).sqrt()
}

/// Appearance of a rendered corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    /// Glyph inside a centred box of about 60% of the frame, thin strokes.
    Centered,
    /// Glyph filling a 16x16 frame with thick strokes, upsampled to the
    /// requested size. Used as a shifted domain for adaptation.
    Compact,
}

struct Pose {
    radius: f64,
    angle: f64,
    cx: f64,
    cy: f64,
    half_width: f64,
}

fn render(class: usize, size: usize, pose: &Pose) -> Vec<f64> {
    let (s, c) = pose.angle.sin_cos();
    let strokes: Vec<Polyline> = glyph(class)
        .into_iter()
        .map(|line| {
            line.into_iter()
                .map(|(x, y)| {
                    let (rx, ry) = (x * c - y * s, x * s + y * c);
                    (pose.cx + pose.radius * rx, pose.cy + pose.radius * ry)
                })
                .collect()
        })
        .collect();
    let mut img = vec![0.0; size * size];
    for py in 0..size {
        for px in 0..size {
            let p = (px as f64 + 0.5, py as f64 + 0.5);
            let d = strokes
                .iter()
                .flat_map(|l| l.windows(2).map(move |w| segment_distance(p, w[0], w[1])))
                .fold(f64::INFINITY, f64::min);
            img[py * size + px] = (pose.half_width + 0.5 - d).clamp(0.0, 1.0);
        }
    }
    img
}

fn draw_pose(rng: &mut Rng64, size: usize, style: Style) -> Pose {
    let centre = size as f64 / 2.0;
    let (radius, width, shift) = match style {
        Style::Centered => (0.3 * size as f64, rng.random_range(1.0..1.5), 0.05 * size as f64),
        Style::Compact => (0.42 * size as f64, rng.random_range(1.1..1.6), 0.03 * size as f64),
    };
    Pose {
        radius: radius * rng.random_range(0.85..1.1),
        angle: rng.random_range(-0.25..0.25),
        cx: centre + rng.random_range(-shift..shift),
        cy: centre + rng.random_range(-shift..shift),
        half_width: width,
    }
}

/// `n` glyph images of `size x size` with balanced, shuffled labels.
pub fn make_synthetic_corpus(n: usize, size: usize, rng: &mut Rng64) -> Result<ImageCorpus> {
    make_styled_corpus(n, size, Style::Centered, rng)
}

pub fn make_styled_corpus(n: usize, size: usize, style: Style, rng: &mut Rng64) -> Result<ImageCorpus> {
    if size < 8 {
        return Err(Error::Config(format!("synthetic images need size >= 8, got {size}")));
    }
    let order = permutation(rng, n);
    let labels: Vec<u8> = order.iter().map(|&i| (i % CLASSES) as u8).collect();
    let plane = size * size;
    let mut data = Vec::with_capacity(n * plane);
    for &label in &labels {
        match style {
            Style::Centered => {
                let pose = draw_pose(rng, size, style);
                data.extend(render(label as usize, size, &pose));
            }
            Style::Compact => {
                let pose = draw_pose(rng, 16, style);
                let small = render(label as usize, 16, &pose);
                data.extend(resize_bilinear(&small, 16, 16, size, size));
            }
        }
    }
    let tag = match style {
        Style::Centered => "synthetic",
        Style::Compact => "synthetic-compact",
    };
    ImageCorpus::new(Tensor::new([n, 1, size, size], data)?, Some(labels), format!("{tag}:n={n},size={size}"))
}
