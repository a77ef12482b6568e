use serde::{Deserialize, Serialize};

use crate::numeric::{logistic, logit};

pub const DEFAULT_TEMPERATURE: f64 = 0.5;

/// Per-node inclusion probabilities `γⱼ = logistic(gamma_logitⱼ)` together
/// with the indicators drawn by the most recent forward pass.
///
/// Like σ in [`VariationalTensor`](super::VariationalTensor), the realized γ
/// is kept next to its logit so that assigned values are exact.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodeGate {
    logits: Vec<f64>,
    gammas: Vec<f64>,
    temperature: f64,
    mask: Option<Vec<bool>>,
    #[serde(skip)]
    last_hard: Vec<bool>,
    #[serde(skip)]
    last_soft: Vec<f64>,
}

// the last-draw buffers are scratch state, not part of the gate
impl PartialEq for NodeGate {
    fn eq(&self, other: &Self) -> bool {
        self.logits == other.logits && self.gammas == other.gammas && self.temperature == other.temperature && self.mask == other.mask
    }
}

/// One Gumbel-softmax (binary concrete) draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Relaxed {
    pub eta: f64,
    pub soft: f64,
    pub hard: bool,
}

/// `η = logit(γ) + log(u/(1−u))`, `z̃ = logistic(η/τ)`, `z = 1{z̃ > 0.5}`.
/// A tie at `z̃ = 0.5` resolves to `z = 0`.
pub fn relax(gamma_logit: f64, u: f64, temperature: f64) -> Relaxed {
    let eta = gamma_logit + (u / (1.0 - u)).ln();
    let soft = logistic(eta / temperature);
    Relaxed {
        eta,
        soft,
        hard: soft > 0.5,
    }
}

impl NodeGate {
    pub fn new(units: usize, gamma: f64, temperature: f64) -> Self {
        assert!(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0, 1)");
        assert!(temperature > 0.0, "temperature must be positive");
        Self {
            logits: vec![logit(gamma); units],
            gammas: vec![gamma; units],
            temperature,
            mask: None,
            last_hard: Vec::new(),
            last_soft: Vec::new(),
        }
    }

    pub(crate) fn from_parts(logits: Vec<f64>, gammas: Vec<f64>, temperature: f64, mask: Option<Vec<bool>>) -> Self {
        Self {
            logits,
            gammas,
            temperature,
            mask,
            last_hard: Vec::new(),
            last_soft: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    /// Mutable logits; γ is re-derived when the guard is dropped.
    pub fn logits_mut(&mut self) -> LogitGuard<'_> {
        LogitGuard { gate: self }
    }

    pub fn gamma(&self, j: usize) -> f64 {
        self.gammas[j]
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn set_gamma_all(&mut self, gamma: f64) {
        assert!(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0, 1)");
        self.logits.fill(logit(gamma));
        self.gammas.fill(gamma);
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    /// Stores the binary mask `1{γ ≥ threshold}`.
    pub fn freeze(&mut self, threshold: f64) {
        self.mask = Some(self.gammas.iter().map(|&g| g >= threshold).collect());
    }

    pub fn set_mask(&mut self, mask: Option<Vec<bool>>) {
        self.mask = mask;
    }

    pub fn last_hard(&self) -> &[bool] {
        &self.last_hard
    }

    pub fn last_soft(&self) -> &[f64] {
        &self.last_soft
    }

    pub(crate) fn record(&mut self, hard: Vec<bool>, soft: Vec<f64>) {
        self.last_hard = hard;
        self.last_soft = soft;
    }
}

pub struct LogitGuard<'a> {
    gate: &'a mut NodeGate,
}

impl std::ops::Deref for LogitGuard<'_> {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.gate.logits
    }
}

impl std::ops::DerefMut for LogitGuard<'_> {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.gate.logits
    }
}

impl Drop for LogitGuard<'_> {
    fn drop(&mut self) {
        let gate = &mut *self.gate;
        for (g, &l) in gate.gammas.iter_mut().zip(&gate.logits) {
            *g = logistic(l);
        }
    }
}
