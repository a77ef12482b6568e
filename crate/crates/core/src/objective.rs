//! Minibatch negative ELBO: summed cross-entropy of one stochastic forward
//! plus the network KL scaled by `batch_rows / dataset_size`.

use crate::error::{Error, Result};
use crate::layers::{GateMode, LayerNoise};
use crate::model::{Network, NetworkCache, NetworkGrads, NoiseStreams};
use crate::numeric::{log_sum_exp, DenseMatrix};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboConfig {
    pub dataset_size: usize,
}

impl ElboConfig {
    /// KL weight for a minibatch of `rows` examples. Summed over one epoch
    /// of disjoint minibatches it equals 1.
    pub fn kl_scale(&self, rows: usize) -> f64 {
        rows as f64 / self.dataset_size as f64
    }
}

#[derive(Clone, Debug)]
pub struct ElboTerms {
    /// `nll + kl_scale · kl`.
    pub loss: f64,
    /// Summed negative log-likelihood over the batch.
    pub nll: f64,
    /// Unscaled network KL.
    pub kl: f64,
    pub kl_scale: f64,
    pub probs: DenseMatrix,
}

pub fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::shape("labels", rows, labels.len()));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    Ok(())
}

pub fn elbo_loss(
    net: &mut Network,
    batch: &DenseMatrix,
    labels: &[usize],
    rng: &mut NoiseStreams,
    cfg: &ElboConfig,
    mode: GateMode,
) -> Result<(ElboTerms, NetworkCache)> {
    let noise = net.sample_noise(rng, mode);
    elbo_with_noise(net, batch, labels, noise, cfg, mode)
}

pub fn elbo_with_noise(
    net: &mut Network,
    batch: &DenseMatrix,
    labels: &[usize],
    noise: Vec<LayerNoise>,
    cfg: &ElboConfig,
    mode: GateMode,
) -> Result<(ElboTerms, NetworkCache)> {
    check_labels(labels, batch.rows(), net.classes())?;
    let (probs, cache) = net.forward_with_noise(batch, noise, mode)?;
    let mut nll = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let logits = cache.logits.row(r);
        nll += log_sum_exp(logits)? - logits[y];
    }
    let kl = net.kl();
    let kl_scale = cfg.kl_scale(batch.rows());
    Ok((
        ElboTerms {
            loss: nll + kl_scale * kl,
            nll,
            kl,
            kl_scale,
            probs,
        },
        cache,
    ))
}

/// Gradient of [`ElboTerms::loss`] with respect to every variational
/// parameter. Gate gradients are dropped when `learn_gates` is false.
pub fn elbo_gradient(
    net: &Network,
    cache: &NetworkCache,
    terms: &ElboTerms,
    labels: &[usize],
    learn_gates: bool,
) -> Result<NetworkGrads> {
    let mut g = terms.probs.clone();
    for (r, &y) in labels.iter().enumerate() {
        let v = g.get(r, y);
        g.set(r, y, v - 1.0);
    }
    let mut grads = net.backward(cache, &g)?;
    if !learn_gates {
        for l in &mut grads.layers {
            l.gate_logit = None;
        }
    }
    net.add_kl_grads(terms.kl_scale, &mut grads);
    Ok(grads)
}
