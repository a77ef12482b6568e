//! IDX (MNIST) binary format: big-endian magic, big-endian u32 dimensions,
//! then unsigned bytes.

use std::fs;
use std::path::Path;

use super::{Dataset, ImageShape, Split};
use crate::error::{Error, Result};
use crate::numeric::DenseMatrix;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn header(bytes: &[u8], path: &Path, magic: u32, dims: usize) -> Result<Vec<usize>> {
    let need = 4 * (1 + dims);
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            path: path.into(),
            detail: format!("{} bytes, no magic number", bytes.len()),
        });
    }
    let be = |i: usize| u32::from_be_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
    let found = be(0);
    if found != magic {
        return Err(Error::BadMagic {
            path: path.into(),
            expected: magic,
            found,
        });
    }
    if bytes.len() < need {
        return Err(Error::Truncated {
            path: path.into(),
            detail: format!("header needs {need} bytes, file has {}", bytes.len()),
        });
    }
    Ok((0..dims).map(|d| be(4 + 4 * d) as usize).collect())
}

fn body<'a>(bytes: &'a [u8], path: &Path, offset: usize, len: usize) -> Result<&'a [u8]> {
    if bytes.len() != offset + len {
        return Err(Error::Truncated {
            path: path.into(),
            detail: format!("expected {} payload bytes, found {}", len, bytes.len().saturating_sub(offset)),
        });
    }
    Ok(&bytes[offset..])
}

/// Returns `(count, rows, cols, pixels)`.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let bytes = read(path)?;
    let d = header(&bytes, path, IDX_IMAGES_MAGIC, 3)?;
    let px = body(&bytes, path, 16, d[0] * d[1] * d[2])?;
    Ok((d[0], d[1], d[2], px.to_vec()))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read(path)?;
    let d = header(&bytes, path, IDX_LABELS_MAGIC, 1)?;
    Ok(body(&bytes, path, 8, d[0])?.to_vec())
}

/// Loads an image/label file pair. Pixels are scaled to `[0, 1]`; the
/// class count is 10 or one more than the largest label, whichever is
/// larger.
pub fn load_idx_images(images: &Path, labels: &Path) -> Result<Dataset> {
    let (n, rows, cols, px) = read_idx_images(images)?;
    let lab = read_idx_labels(labels)?;
    if lab.len() != n {
        return Err(Error::CountMismatch { images: n, labels: lab.len() });
    }
    let feats = px.iter().map(|&p| p as f64 / 255.0).collect();
    let labels: Vec<usize> = lab.iter().map(|&l| l as usize).collect();
    let classes = labels.iter().map(|&l| l + 1).max().unwrap_or(0).max(10);
    let shape = ImageShape {
        channels: 1,
        height: rows,
        width: cols,
    };
    Dataset::new(DenseMatrix::from_vec(n, rows * cols, feats)?, labels, classes, Some(shape), Split::Train)
}

pub fn write_idx_images(path: &Path, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    let per = rows * cols;
    if per == 0 || pixels.len() % per != 0 {
        return Err(Error::shape("IDX image payload", format!("multiple of {per}"), pixels.len()));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, (pixels.len() / per) as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
