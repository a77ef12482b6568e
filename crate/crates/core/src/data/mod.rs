//! Desk-scale datasets and preprocessing.

mod augment;
mod corrupt;
mod digits;
mod idx;
mod split;
mod synthetic;
mod tabular;

pub use augment::{augment_batch, augment_image, AugmentParams};
pub use corrupt::{corrupt, CorruptionKind, CorruptionSpec, GAUSSIAN_NOISE_SIGMA};
pub use digits::{procedural_digit_bytes, procedural_digits, render_digit};
pub use idx::{load_idx_images, read_idx_images, read_idx_labels, write_idx_images, write_idx_labels, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use split::split_train_val;
pub use synthetic::{gaussian_blobs, gaussian_blobs_at, two_moons};
pub use tabular::load_csv;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Channel-major image layout of each feature row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ImageShape {
    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: DenseMatrix,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub image: Option<ImageShape>,
    pub split: Split,
}

impl Dataset {
    pub fn new(features: DenseMatrix, labels: Vec<usize>, classes: usize, image: Option<ImageShape>, split: Split) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::CountMismatch {
                images: features.rows(),
                labels: labels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        if let Some(s) = image {
            if s.len() != features.cols() {
                return Err(Error::shape("image shape", s.len(), features.cols()));
            }
        }
        Ok(Self {
            features,
            labels,
            classes,
            image,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            image: self.image,
            split: self.split,
        }
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.classes];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }
}

/// Per-channel (images) or per-feature (tabular) standardization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    /// Statistics of a training split. Zero-variance groups get std 1.
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyInput("Normalization::fit"));
        }
        let groups = group_of(train);
        let g = groups.iter().copied().max().map_or(0, |m| m + 1);
        let mut sum = vec![0.0; g];
        let mut count = vec![0usize; g];
        for row in train.features.iter_rows() {
            for (v, &k) in row.iter().zip(&groups) {
                sum[k] += v;
                count[k] += 1;
            }
        }
        let mean: Vec<f64> = sum.iter().zip(&count).map(|(s, &n)| s / n as f64).collect();
        let mut sq = vec![0.0; g];
        for row in train.features.iter_rows() {
            for (v, &k) in row.iter().zip(&groups) {
                sq[k] += (v - mean[k]) * (v - mean[k]);
            }
        }
        let std = sq
            .iter()
            .zip(&count)
            .map(|(s, &n)| {
                let sd = (s / n as f64).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, ds: &mut Dataset) -> Result<()> {
        let groups = self.groups_for(ds)?;
        for row in 0..ds.len() {
            for (v, &k) in ds.features.row_mut(row).iter_mut().zip(&groups) {
                *v = (*v - self.mean[k]) / self.std[k];
            }
        }
        Ok(())
    }

    pub fn apply_matrix(&self, m: &mut DenseMatrix, image: Option<ImageShape>) -> Result<()> {
        let groups = groups_for_shape(m.cols(), image);
        self.check(&groups)?;
        for row in 0..m.rows() {
            for (v, &k) in m.row_mut(row).iter_mut().zip(&groups) {
                *v = (*v - self.mean[k]) / self.std[k];
            }
        }
        Ok(())
    }

    pub fn invert(&self, ds: &mut Dataset) -> Result<()> {
        let groups = self.groups_for(ds)?;
        for row in 0..ds.len() {
            for (v, &k) in ds.features.row_mut(row).iter_mut().zip(&groups) {
                *v = *v * self.std[k] + self.mean[k];
            }
        }
        Ok(())
    }

    fn groups_for(&self, ds: &Dataset) -> Result<Vec<usize>> {
        let g = group_of(ds);
        self.check(&g)?;
        Ok(g)
    }

    fn check(&self, groups: &[usize]) -> Result<()> {
        let need = groups.iter().copied().max().map_or(0, |m| m + 1);
        if need != self.mean.len() || self.std.len() != self.mean.len() {
            return Err(Error::shape("normalization groups", self.mean.len(), need));
        }
        Ok(())
    }
}

fn group_of(ds: &Dataset) -> Vec<usize> {
    groups_for_shape(ds.dim(), ds.image)
}

fn groups_for_shape(cols: usize, image: Option<ImageShape>) -> Vec<usize> {
    match image {
        Some(s) => (0..cols).map(|i| i / (s.height * s.width)).collect(),
        None => (0..cols).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::RngStream;

    #[test]
    fn normalize_then_invert_is_identity() {
        let mut ds = two_moons(50, 0.2, &mut RngStream::new(3, 0)).unwrap();
        let orig = ds.clone();
        let n = Normalization::fit(&ds).unwrap();
        n.apply(&mut ds).unwrap();
        n.invert(&mut ds).unwrap();
        for (a, b) in ds.features.data().iter().zip(orig.features.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn image_stats_are_per_channel() {
        let f = DenseMatrix::from_rows(&[vec![0.0, 1.0, 10.0, 10.0], vec![1.0, 0.0, 30.0, 30.0]]).unwrap();
        let shape = ImageShape {
            channels: 2,
            height: 1,
            width: 2,
        };
        let ds = Dataset::new(f, vec![0, 1], 2, Some(shape), Split::Train).unwrap();
        let n = Normalization::fit(&ds).unwrap();
        assert_eq!(n.mean, vec![0.5, 20.0]);
        assert_eq!(n.std, vec![0.5, 10.0]);
    }

    #[test]
    fn mismatched_counts_rejected() {
        let r = Dataset::new(DenseMatrix::zeros(2, 1), vec![0], 1, None, Split::Train);
        assert!(matches!(r, Err(Error::CountMismatch { images: 2, labels: 1 })));
    }
}
