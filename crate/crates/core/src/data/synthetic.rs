use std::f64::consts::PI;

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::numeric::{DenseMatrix, RngStream};

/// Two interleaving half circles. Class 0 lies on `(cos t, sin t)`, class 1
/// on `(1 − cos t, ½ − sin t)`, `t ∈ [0, π]`, plus isotropic Gaussian noise.
/// Class 0 gets the extra point when `n` is odd.
pub fn two_moons(n: usize, noise_sigma: f64, rng: &mut RngStream) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("two_moons needs n >= 2, got {n}")));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::InvalidArgument("two_moons noise must be non-negative".into()));
    }
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let t = PI * rng.uniform();
        let (x, y) = if class == 0 {
            (t.cos(), t.sin())
        } else {
            (1.0 - t.cos(), 0.5 - t.sin())
        };
        let (nx, ny) = (rng.standard_normal(), rng.standard_normal());
        data.push(x + noise_sigma * nx);
        data.push(y + noise_sigma * ny);
        labels.push(class);
    }
    Dataset::new(DenseMatrix::from_vec(n, 2, data)?, labels, 2, None, Split::Train)
}

/// `k` isotropic 2-D blobs with centres evenly spaced on a circle of
/// radius 4, labelled by blob.
pub fn gaussian_blobs(n: usize, k: usize, spread: f64, rng: &mut RngStream) -> Result<Dataset> {
    if k == 0 || n < k {
        return Err(Error::InvalidArgument(format!("gaussian_blobs needs n >= k >= 1, got n={n} k={k}")));
    }
    let centers: Vec<[f64; 2]> = (0..k)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / k as f64;
            [4.0 * a.cos(), 4.0 * a.sin()]
        })
        .collect();
    gaussian_blobs_at(n, &centers, spread, rng)
}

/// Blobs around explicit centres; example `i` belongs to blob `i mod k`.
pub fn gaussian_blobs_at(n: usize, centers: &[[f64; 2]], spread: f64, rng: &mut RngStream) -> Result<Dataset> {
    let k = centers.len();
    if k == 0 || n < k {
        return Err(Error::InvalidArgument(format!("gaussian_blobs needs n >= k >= 1, got n={n} k={k}")));
    }
    if !(spread >= 0.0) {
        return Err(Error::InvalidArgument("gaussian_blobs spread must be non-negative".into()));
    }
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = centers[i % k];
        data.push(c[0] + spread * rng.standard_normal());
        data.push(c[1] + spread * rng.standard_normal());
        labels.push(i % k);
    }
    Dataset::new(DenseMatrix::from_vec(n, 2, data)?, labels, k, None, Split::Test)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_moons_lie_on_arcs() {
        let ds = two_moons(101, 0.0, &mut RngStream::new(1, 7)).unwrap();
        for (row, &l) in ds.features.iter_rows().zip(&ds.labels) {
            let (x, y) = (row[0], row[1]);
            let r = if l == 0 {
                (x * x + y * y).sqrt()
            } else {
                ((x - 1.0).powi(2) + (y - 0.5).powi(2)).sqrt()
            };
            assert!((r - 1.0).abs() < 1e-12);
            if l == 0 {
                assert!(y >= 0.0);
            } else {
                assert!(y <= 0.5);
            }
        }
    }

    #[test]
    fn balanced_and_deterministic() {
        let a = two_moons(11, 0.1, &mut RngStream::new(4, 7)).unwrap();
        let b = two_moons(11, 0.1, &mut RngStream::new(4, 7)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.class_counts(), vec![6, 5]);
        let blobs = gaussian_blobs(10, 3, 0.5, &mut RngStream::new(4, 7)).unwrap();
        assert_eq!(blobs.class_counts(), vec![4, 3, 3]);
    }

    #[test]
    fn invalid_counts() {
        assert!(two_moons(1, 0.1, &mut RngStream::new(0, 0)).is_err());
        assert!(gaussian_blobs(2, 3, 0.1, &mut RngStream::new(0, 0)).is_err());
        assert!(gaussian_blobs(2, 0, 0.1, &mut RngStream::new(0, 0)).is_err());
    }
}
