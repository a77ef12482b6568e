use super::ImageShape;
use crate::error::{Error, Result};
use crate::numeric::{streams, DenseMatrix, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AugmentParams {
    pub pad: usize,
    pub flip: bool,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self { pad: 4, flip: true }
    }
}

/// Zero-pads by `pad`, crops the original size at offset `(dy, dx)` of the
/// padded image, then optionally mirrors left-right. `(pad, pad)` without
/// flip is the identity.
pub fn augment_image(img: &[f64], shape: ImageShape, pad: usize, dy: usize, dx: usize, flip: bool) -> Vec<f64> {
    let (h, w) = (shape.height, shape.width);
    let mut out = vec![0.0; img.len()];
    for c in 0..shape.channels {
        let base = c * h * w;
        for y in 0..h {
            let sy = (y + dy) as isize - pad as isize;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            for x in 0..w {
                let sx = (x + dx) as isize - pad as isize;
                if sx < 0 || sx >= w as isize {
                    continue;
                }
                let tx = if flip { w - 1 - x } else { x };
                out[base + y * w + tx] = img[base + sy as usize * w + sx as usize];
            }
        }
    }
    out
}

/// Augments every row. Example `ids[r]` in `epoch` draws its crop and flip
/// from its own sub-stream, so results do not depend on batch composition.
pub fn augment_batch(batch: &DenseMatrix, ids: &[usize], shape: Option<ImageShape>, seed: u64, epoch: usize, params: AugmentParams) -> Result<DenseMatrix> {
    let shape = shape.ok_or_else(|| Error::InvalidArgument("augmentation needs image-shaped inputs".into()))?;
    if shape.len() != batch.cols() || ids.len() != batch.rows() {
        return Err(Error::shape("augment batch", format!("{}x{}", ids.len(), shape.len()), format!("{}x{}", batch.rows(), batch.cols())));
    }
    let mut out = DenseMatrix::zeros(batch.rows(), batch.cols());
    for (r, &id) in ids.iter().enumerate() {
        let mut rng = RngStream::new(seed, streams::derive(streams::AUGMENT, epoch as u64, id as u64));
        let dy = rng.below(2 * params.pad + 1);
        let dx = rng.below(2 * params.pad + 1);
        let flip = params.flip && rng.coin();
        out.row_mut(r).copy_from_slice(&augment_image(batch.row(r), shape, params.pad, dy, dx, flip));
    }
    Ok(out)
}
