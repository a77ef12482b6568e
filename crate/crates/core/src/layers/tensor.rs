use serde::{Deserialize, Serialize};

use crate::numeric::{logistic, softplus, softplus_inverse};

/// Mean-field Gaussian parameters for a weight tensor: one `(μ, σ)` pair per
/// entry, with σ parameterized as `softplus(sigma_raw)`.
///
/// The realized σ is stored next to its raw value. Optimizer updates move
/// `sigma_raw` and re-derive σ; explicit assignments (initialization, the
/// post-perturbation reset) store the requested σ verbatim, because the
/// floating-point image of softplus does not contain every small σ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalTensor {
    rows: usize,
    cols: usize,
    mu: Vec<f64>,
    sigma_raw: Vec<f64>,
    sigma: Vec<f64>,
}

impl VariationalTensor {
    pub fn new(rows: usize, cols: usize, mu: f64, sigma: f64) -> Self {
        assert!(sigma > 0.0, "sigma must be positive");
        let n = rows * cols;
        Self {
            rows,
            cols,
            mu: vec![mu; n],
            sigma_raw: vec![softplus_inverse(sigma); n],
            sigma: vec![sigma; n],
        }
    }

    pub(crate) fn from_parts(
        rows: usize,
        cols: usize,
        mu: Vec<f64>,
        sigma_raw: Vec<f64>,
        sigma: Vec<f64>,
    ) -> Option<Self> {
        let n = rows * cols;
        if mu.len() != n || sigma_raw.len() != n || sigma.len() != n {
            return None;
        }
        if sigma.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return None;
        }
        Some(Self {
            rows,
            cols,
            mu,
            sigma_raw,
            sigma,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn mu_mut(&mut self) -> &mut [f64] {
        &mut self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn sigma_raw(&self) -> &[f64] {
        &self.sigma_raw
    }

    /// Mutable raw storage; σ is re-derived when the guard is dropped.
    pub fn sigma_raw_mut(&mut self) -> RawGuard<'_> {
        RawGuard { tensor: self }
    }

    /// `dσ/d(sigma_raw)` per entry.
    pub fn sigma_jacobian(&self) -> Vec<f64> {
        self.sigma_raw.iter().map(|&r| logistic(r)).collect()
    }

    pub fn set_sigma_all(&mut self, sigma: f64) {
        assert!(sigma > 0.0, "sigma must be positive");
        let raw = softplus_inverse(sigma);
        self.sigma_raw.fill(raw);
        self.sigma.fill(sigma);
    }

    pub fn set_sigma(&mut self, i: usize, sigma: f64) {
        assert!(sigma > 0.0, "sigma must be positive");
        self.sigma_raw[i] = softplus_inverse(sigma);
        self.sigma[i] = sigma;
    }

    fn refresh(&mut self) {
        for (s, &r) in self.sigma.iter_mut().zip(&self.sigma_raw) {
            *s = softplus(r);
        }
    }

    /// Reparameterized sample `θ = μ + σ·ε`.
    pub fn sample_into(&self, eps: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.mu
                .iter()
                .zip(&self.sigma)
                .zip(eps)
                .map(|((m, s), e)| m + s * e),
        );
    }
}

pub struct RawGuard<'a> {
    tensor: &'a mut VariationalTensor,
}

impl std::ops::Deref for RawGuard<'_> {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.tensor.sigma_raw
    }
}

impl std::ops::DerefMut for RawGuard<'_> {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.tensor.sigma_raw
    }
}

impl Drop for RawGuard<'_> {
    fn drop(&mut self) {
        self.tensor.refresh();
    }
}
