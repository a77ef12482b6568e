//! Parametric corruptions with five severity levels. Severity 0 is the
//! identity. Levels are this crate's own:
//!
//! | kind           | parameter            | 1    | 2   | 3   | 4    | 5   |
//! |----------------|----------------------|------|-----|-----|------|-----|
//! | gaussian-noise | noise σ              | 0.05 | 0.1 | 0.2 | 0.35 | 0.5 |
//! | blur-3x3-box   | box-filter passes    | 1    | 2   | 3   | 4    | 5   |
//! | contrast-scale | contrast factor      | 0.8  | 0.6 | 0.4 | 0.25 | 0.1 |
//! | pixel-dropout  | drop probability     | 0.05 | 0.1 | 0.2 | 0.35 | 0.5 |
//!
//! Random corruptions reuse one noise draw per (seed, kind) across
//! severities, so a higher level is the same noise made stronger.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::numeric::{streams, RngStream};

pub const GAUSSIAN_NOISE_SIGMA: [f64; 5] = [0.05, 0.1, 0.2, 0.35, 0.5];
const BLUR_PASSES: [usize; 5] = [1, 2, 3, 4, 5];
const CONTRAST: [f64; 5] = [0.8, 0.6, 0.4, 0.25, 0.1];
const DROPOUT: [f64; 5] = [0.05, 0.1, 0.2, 0.35, 0.5];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorruptionKind {
    GaussianNoise,
    #[serde(rename = "blur-3x3-box")]
    Blur3x3Box,
    ContrastScale,
    PixelDropout,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 4] = [
        CorruptionKind::GaussianNoise,
        CorruptionKind::Blur3x3Box,
        CorruptionKind::ContrastScale,
        CorruptionKind::PixelDropout,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CorruptionKind::GaussianNoise => "gaussian-noise",
            CorruptionKind::Blur3x3Box => "blur-3x3-box",
            CorruptionKind::ContrastScale => "contrast-scale",
            CorruptionKind::PixelDropout => "pixel-dropout",
        }
    }

    fn tag(&self) -> u64 {
        *self as u64
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        CorruptionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown corruption kind `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub severity: u8,
}

impl CorruptionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.severity > 5 {
            return Err(Error::InvalidArgument(format!("severity {} outside 0..=5", self.severity)));
        }
        Ok(())
    }
}

/// Applies `spec` to raw (unnormalized) features. Image pixels are clipped
/// to `[0, 1]`; tabular features are left unclipped.
pub fn corrupt(ds: &Dataset, spec: CorruptionSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    if spec.kind == CorruptionKind::Blur3x3Box && ds.image.is_none() {
        return Err(Error::InvalidArgument("blur-3x3-box needs image-shaped inputs".into()));
    }
    let mut out = ds.clone();
    if spec.severity == 0 {
        return Ok(out);
    }
    let level = spec.severity as usize - 1;
    let mut rng = RngStream::new(seed, streams::derive(streams::CORRUPTION, spec.kind.tag(), 0));
    let clip = ds.image.is_some();
    for r in 0..out.len() {
        let row = out.features.row_mut(r);
        match spec.kind {
            CorruptionKind::GaussianNoise => {
                let s = GAUSSIAN_NOISE_SIGMA[level];
                for v in row.iter_mut() {
                    *v += s * rng.standard_normal();
                }
            }
            CorruptionKind::PixelDropout => {
                let p = DROPOUT[level];
                for v in row.iter_mut() {
                    if rng.uniform() < p {
                        *v = 0.0;
                    }
                }
            }
            CorruptionKind::ContrastScale => {
                let c = CONTRAST[level];
                let mean = row.iter().sum::<f64>() / row.len() as f64;
                for v in row.iter_mut() {
                    *v = mean + c * (*v - mean);
                }
            }
            CorruptionKind::Blur3x3Box => {
                let shape = ds.image.expect("checked above");
                for _ in 0..BLUR_PASSES[level] {
                    box_blur(row, shape.channels, shape.height, shape.width);
                }
            }
        }
        if clip {
            for v in row.iter_mut() {
                *v = v.clamp(0.0, 1.0);
            }
        }
    }
    Ok(out)
}

/// 3×3 mean filter with edge clamping, per channel.
fn box_blur(img: &mut [f64], channels: usize, h: usize, w: usize) {
    let src = img.to_vec();
    for c in 0..channels {
        let base = c * h * w;
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for dy in [-1isize, 0, 1] {
                    for dx in [-1isize, 0, 1] {
                        let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                        let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                        s += src[base + yy * w + xx];
                    }
                }
                img[base + y * w + x] = s / 9.0;
            }
        }
    }
}
