//! Procedural 28×28 handwritten-style digits in MNIST format.
//!
//! Each digit is a seven-segment skeleton drawn with a soft stroke, then
//! randomly slanted, rotated, scaled and shifted, with jittered segment
//! endpoints, occasional missing segments and pixel noise. Pixels are
//! quantized to bytes so the set round-trips through IDX files exactly.

use super::{Dataset, ImageShape, Split};
use crate::error::{Error, Result};
use crate::numeric::{DenseMatrix, RngStream};

pub const SIDE: usize = 28;

// Segment endpoints in a unit box (x right, y down): a b c d e f g.
const SEGMENTS: [[f64; 4]; 7] = [
    [0.0, 0.0, 1.0, 0.0],
    [1.0, 0.0, 1.0, 0.5],
    [1.0, 0.5, 1.0, 1.0],
    [0.0, 1.0, 1.0, 1.0],
    [0.0, 0.5, 0.0, 1.0],
    [0.0, 0.0, 0.0, 0.5],
    [0.0, 0.5, 1.0, 0.5],
];

const DIGITS: [&str; 10] = ["abcdef", "bc", "abged", "abgcd", "fgbc", "afgcd", "afgedc", "abc", "abcdefg", "abcdfg"];

fn seg_dist2(px: f64, py: f64, s: [f64; 4]) -> f64 {
    let (dx, dy) = (s[2] - s[0], s[3] - s[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - s[0]) * dx + (py - s[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (s[0] + t * dx - px, s[1] + t * dy - py);
    cx * cx + cy * cy
}

/// Renders one digit into 784 bytes.
pub fn render_digit(digit: usize, rng: &mut RngStream) -> Vec<u8> {
    let width = 8.0 + 4.0 * rng.uniform();
    let height = 15.0 + 5.0 * rng.uniform();
    let slant = 0.35 * (rng.uniform() - 0.5);
    let angle = 0.3 * (rng.uniform() - 0.5);
    let (cx, cy) = (14.0 + 3.0 * (rng.uniform() - 0.5), 14.0 + 3.0 * (rng.uniform() - 0.5));
    let stroke = 0.9 + 0.8 * rng.uniform();
    let (sin, cos) = angle.sin_cos();

    let place = |ux: f64, uy: f64| {
        let x = (ux - 0.5) * width + slant * (0.5 - uy) * height;
        let y = (uy - 0.5) * height;
        (cx + cos * x - sin * y, cy + sin * x + cos * y)
    };

    let mut strokes = Vec::new();
    for ch in DIGITS[digit].chars() {
        let s = SEGMENTS[(ch as u8 - b'a') as usize];
        let keep = rng.uniform() > 0.04;
        let j: Vec<f64> = (0..4).map(|_| 0.9 * rng.standard_normal()).collect();
        if !keep {
            continue;
        }
        let (x0, y0) = place(s[0], s[1]);
        let (x1, y1) = place(s[2], s[3]);
        strokes.push([x0 + j[0], y0 + j[1], x1 + j[2], y1 + j[3]]);
    }

    let mut out = Vec::with_capacity(SIDE * SIDE);
    for y in 0..SIDE {
        for x in 0..SIDE {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let d2 = strokes.iter().map(|&s| seg_dist2(px, py, s)).fold(f64::INFINITY, f64::min);
            let ink = (-d2 / (2.0 * stroke * stroke)).exp();
            let v = (1.2 * ink + 0.06 * rng.standard_normal()).clamp(0.0, 1.0);
            out.push((v * 255.0).round() as u8);
        }
    }
    out
}

/// `n` digits with labels cycling 0..9, returned as raw bytes and labels.
pub fn procedural_digit_bytes(n: usize, rng: &mut RngStream) -> (Vec<u8>, Vec<u8>) {
    let mut px = Vec::with_capacity(n * SIDE * SIDE);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let d = i % 10;
        px.extend(render_digit(d, rng));
        labels.push(d as u8);
    }
    (px, labels)
}

pub fn procedural_digits(n: usize, rng: &mut RngStream) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("procedural_digits needs n >= 1".into()));
    }
    let (px, labels) = procedural_digit_bytes(n, rng);
    let feats = px.iter().map(|&p| p as f64 / 255.0).collect();
    let shape = ImageShape {
        channels: 1,
        height: SIDE,
        width: SIDE,
    };
    Dataset::new(
        DenseMatrix::from_vec(n, SIDE * SIDE, feats)?,
        labels.into_iter().map(usize::from).collect(),
        10,
        Some(shape),
        Split::Train,
    )
}
