//! Feed-forward classifiers assembled from variational layers.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{
    Activation, GateMode, LayerCache, LayerGrads, LayerKind, LayerNoise, PriorConfig, Topology, VariationalLayer,
};
use crate::numeric::{softmax_rows, streams, DenseMatrix, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvSpec {
    pub channels: usize,
    pub kernel: usize,
    #[serde(default)]
    pub padding: usize,
}

/// One layer descriptor: exactly one of `units` (dense) or `conv`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub kind: LayerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conv: Option<ConvSpec>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
}

fn default_activation() -> Activation {
    Activation::Relu
}

impl LayerSpec {
    pub fn dense(kind: LayerKind, units: usize, activation: Activation) -> Self {
        Self {
            kind,
            units: Some(units),
            conv: None,
            activation,
        }
    }

    pub fn conv(kind: LayerKind, channels: usize, kernel: usize, padding: usize) -> Self {
        Self {
            kind,
            units: None,
            conv: Some(ConvSpec {
                channels,
                kernel,
                padding,
            }),
            activation: Activation::Relu,
        }
    }
}

/// Architecture description. `input` is `[features]` or `[channels, height,
/// width]`; the last layer must emit `classes` logits. A convolution may
/// only follow the image input or another convolution; a dense layer after
/// a convolution consumes the flattened channel-major output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input: Vec<usize>,
    pub classes: usize,
    #[serde(default)]
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// MLP with ReLU hidden layers of `hidden_kind` and an identity head of
    /// `head_kind`.
    pub fn mlp(input: usize, hidden: &[usize], classes: usize, hidden_kind: LayerKind, head_kind: LayerKind) -> Self {
        let mut layers: Vec<_> = hidden
            .iter()
            .map(|&u| LayerSpec::dense(hidden_kind, u, Activation::Relu))
            .collect();
        layers.push(LayerSpec::dense(head_kind, classes, Activation::Identity));
        Self {
            input: vec![input],
            classes,
            layers,
        }
    }

    pub fn input_len(&self) -> usize {
        self.input.iter().product()
    }

    pub fn has_gates(&self) -> bool {
        self.layers.iter().any(|l| l.kind == LayerKind::SpikeSlab)
    }

    /// Resolves the chain of layer topologies, checking that shapes connect.
    pub fn topologies(&self) -> Result<Vec<Topology>> {
        if self.classes == 0 {
            return Err(Error::config("network.classes", "must be positive"));
        }
        let mut shape: Vec<usize> = match self.input.as_slice() {
            [n] if *n > 0 => vec![*n],
            [c, h, w] if c * h * w > 0 => vec![*c, *h, *w],
            _ => return Err(Error::config("network.input", "expected [features] or [channels, height, width]")),
        };
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let key = format!("network.layers[{i}]");
            let topo = match (l.units, l.conv) {
                (Some(units), None) if units > 0 => Topology::Dense {
                    fan_in: shape.iter().product(),
                    units,
                },
                (None, Some(c)) => {
                    let [ch, h, w] = shape[..] else {
                        return Err(Error::config(key, "convolution requires an image-shaped input"));
                    };
                    if c.channels == 0 || c.kernel == 0 || c.kernel > h + 2 * c.padding || c.kernel > w + 2 * c.padding {
                        return Err(Error::config(key, "invalid convolution geometry"));
                    }
                    Topology::Conv {
                        in_channels: ch,
                        height: h,
                        width: w,
                        out_channels: c.channels,
                        kernel: c.kernel,
                        padding: c.padding,
                    }
                }
                _ => return Err(Error::config(key, "exactly one of `units` (positive) or `conv` is required")),
            };
            shape = match topo {
                Topology::Dense { units, .. } => vec![units],
                Topology::Conv { out_channels, .. } => {
                    let (h, w) = topo.out_hw();
                    vec![out_channels, h, w]
                }
            };
            out.push(topo);
        }
        let final_len: usize = shape.iter().product();
        if final_len != self.classes {
            return Err(Error::config(
                "network.layers",
                format!("network emits {final_len} outputs but classes = {}", self.classes),
            ));
        }
        Ok(out)
    }
}

/// The two noise streams a stochastic forward pass consumes.
#[derive(Clone, Debug)]
pub struct NoiseStreams {
    pub weights: RngStream,
    pub gates: RngStream,
}

impl NoiseStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            weights: RngStream::new(seed, streams::WEIGHT_NOISE),
            gates: RngStream::new(seed, streams::GATE_NOISE),
        }
    }

    /// Independent streams for evaluation, keyed by `tag`.
    pub fn for_eval(seed: u64, tag: u64) -> Self {
        Self {
            weights: RngStream::new(seed, streams::derive(streams::EVAL, tag, 1)),
            gates: RngStream::new(seed, streams::derive(streams::EVAL, tag, 2)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct NetworkCache {
    pub layers: Vec<LayerCache>,
    pub logits: DenseMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkGrads {
    pub layers: Vec<LayerGrads>,
}

impl NetworkGrads {
    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.scale(s);
        }
    }

    /// Gradient tensors in [`Network::param_ids`] order; `None` for gates
    /// that are not being learned.
    pub fn tensors(&self) -> Vec<(ParamId, Option<&[f64]>)> {
        let mut out = Vec::new();
        for (i, g) in self.layers.iter().enumerate() {
            out.push((ParamId::new(i, ParamKind::WeightMu), Some(g.w_mu.as_slice())));
            out.push((ParamId::new(i, ParamKind::WeightRaw), Some(g.w_raw.as_slice())));
            out.push((ParamId::new(i, ParamKind::BiasMu), Some(g.b_mu.as_slice())));
            out.push((ParamId::new(i, ParamKind::BiasRaw), Some(g.b_raw.as_slice())));
            if let Some(gl) = &g.gate_logit {
                out.push((ParamId::new(i, ParamKind::GateLogit), Some(gl.as_slice())));
            }
        }
        out
    }

    /// Concatenation in the same order as [`Network::flat_params`].
    pub fn flatten(&self, include_gates: bool) -> Vec<f64> {
        let mut v = Vec::new();
        for g in &self.layers {
            v.extend(&g.w_mu);
            v.extend(&g.w_raw);
            v.extend(&g.b_mu);
            v.extend(&g.b_raw);
            if include_gates {
                if let Some(gl) = &g.gate_logit {
                    v.extend(gl);
                }
            }
        }
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamKind {
    WeightMu,
    WeightRaw,
    BiasMu,
    BiasRaw,
    GateLogit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId {
    pub layer: usize,
    pub kind: ParamKind,
}

impl ParamId {
    pub fn new(layer: usize, kind: ParamKind) -> Self {
        Self { layer, kind }
    }

    /// Dense slot index, stable across freeze/unfreeze.
    pub fn slot(&self) -> usize {
        self.layer * 5 + self.kind as usize
    }
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.kind {
            ParamKind::WeightMu => "weight.mu",
            ParamKind::WeightRaw => "weight.sigma_raw",
            ParamKind::BiasMu => "bias.mu",
            ParamKind::BiasRaw => "bias.sigma_raw",
            ParamKind::GateLogit => "gate.logit",
        };
        write!(f, "layer{}.{name}", self.layer)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub spec: NetworkSpec,
    pub prior: PriorConfig,
    pub layers: Vec<VariationalLayer>,
}

impl Network {
    pub fn new(spec: NetworkSpec, prior: PriorConfig, temperature: f64) -> Result<Self> {
        prior.validate()?;
        if !(temperature > 0.0) {
            return Err(Error::config("trainer.temperature", "must be positive"));
        }
        let topologies = spec.topologies()?;
        let layers = spec
            .layers
            .iter()
            .zip(topologies)
            .map(|(l, t)| VariationalLayer::new(l.kind, t, l.activation, prior, temperature))
            .collect();
        Ok(Self { spec, prior, layers })
    }

    pub fn input_len(&self) -> usize {
        self.spec.input_len()
    }

    pub fn classes(&self) -> usize {
        self.spec.classes
    }

    pub fn has_gates(&self) -> bool {
        self.layers.iter().any(|l| l.gate.is_some())
    }

    pub fn gates_frozen(&self) -> bool {
        self.layers
            .iter()
            .filter_map(|l| l.gate.as_ref())
            .any(|g| g.mask().is_some())
    }

    /// Frozen mask when one is stored, hard sampling otherwise.
    pub fn default_gate_mode(&self) -> GateMode {
        if self.gates_frozen() {
            GateMode::FrozenMask
        } else {
            GateMode::Hard
        }
    }

    /// Stores `1{γ ≥ threshold}` on every gate.
    pub fn freeze_gates(&mut self, threshold: f64) {
        for g in self.layers.iter_mut().filter_map(|l| l.gate.as_mut()) {
            g.freeze(threshold);
        }
    }

    pub fn gammas(&self) -> Vec<Vec<f64>> {
        self.layers
            .iter()
            .filter_map(|l| l.gate.as_ref())
            .map(|g| g.gammas().to_vec())
            .collect()
    }

    pub fn sample_noise(&self, rng: &mut NoiseStreams, mode: GateMode) -> Vec<LayerNoise> {
        self.layers
            .iter()
            .map(|l| l.sample_noise(&mut rng.weights, &mut rng.gates, mode))
            .collect()
    }

    pub fn forward(&mut self, batch: &DenseMatrix, rng: &mut NoiseStreams, mode: GateMode) -> Result<(DenseMatrix, NetworkCache)> {
        let noise = self.sample_noise(rng, mode);
        self.forward_with_noise(batch, noise, mode)
    }

    /// Forward pass with externally supplied (frozen) noise. Returns class
    /// probabilities; the cache holds the logits and per-layer state.
    pub fn forward_with_noise(
        &mut self,
        batch: &DenseMatrix,
        noise: Vec<LayerNoise>,
        mode: GateMode,
    ) -> Result<(DenseMatrix, NetworkCache)> {
        if batch.cols() != self.input_len() {
            return Err(Error::shape("network input width", self.input_len(), batch.cols()));
        }
        if noise.len() != self.layers.len() {
            return Err(Error::shape("network noise", self.layers.len(), noise.len()));
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = batch.clone();
        for (i, (layer, n)) in self.layers.iter_mut().zip(noise).enumerate() {
            let (out, cache) = layer.forward(&h, n, mode).map_err(|e| match e {
                Error::MissingMask(_) => Error::MissingMask(i),
                e => e,
            })?;
            caches.push(cache);
            h = out;
        }
        let probs = softmax_rows(&h);
        Ok((probs, NetworkCache { layers: caches, logits: h }))
    }

    /// Backpropagates `∂loss/∂logits`.
    pub fn backward(&self, cache: &NetworkCache, grad_logits: &DenseMatrix) -> Result<NetworkGrads> {
        if cache.layers.len() != self.layers.len() {
            return Err(Error::MissingCache("network cache depth differs from network"));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_logits.clone();
        for (layer, c) in self.layers.iter().zip(&cache.layers).rev() {
            let (gi, lg) = layer.backward(c, &g)?;
            grads.push(lg);
            g = gi;
        }
        grads.reverse();
        Ok(NetworkGrads { layers: grads })
    }

    /// One stochastic forward in the network's default gate mode.
    pub fn predict(&mut self, batch: &DenseMatrix, rng: &mut NoiseStreams) -> Result<DenseMatrix> {
        let mode = self.default_gate_mode();
        Ok(self.forward(batch, rng, mode)?.0)
    }

    /// Average of `mc` independent stochastic forwards.
    pub fn predict_mc(&mut self, batch: &DenseMatrix, rng: &mut NoiseStreams, mc: usize) -> Result<DenseMatrix> {
        if mc == 0 {
            return Err(Error::InvalidArgument("mc must be at least 1".into()));
        }
        let mut acc = self.predict(batch, rng)?;
        if mc == 1 {
            return Ok(acc);
        }
        for _ in 1..mc {
            let p = self.predict(batch, rng)?;
            for (a, b) in acc.data_mut().iter_mut().zip(p.data()) {
                *a += b;
            }
        }
        let inv = mc as f64;
        acc.map_inplace(|v| v / inv);
        Ok(acc)
    }

    pub fn kl(&self) -> f64 {
        self.layers.iter().map(VariationalLayer::kl).fold(0.0, |a, b| a + b)
    }

    pub fn add_kl_grads(&self, scale: f64, grads: &mut NetworkGrads) {
        for (l, g) in self.layers.iter().zip(&mut grads.layers) {
            l.add_kl_grad(scale, g);
        }
    }

    pub fn param_ids(&self, include_gates: bool) -> Vec<ParamId> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            for k in [ParamKind::WeightMu, ParamKind::WeightRaw, ParamKind::BiasMu, ParamKind::BiasRaw] {
                out.push(ParamId::new(i, k));
            }
            if include_gates && l.gate.is_some() {
                out.push(ParamId::new(i, ParamKind::GateLogit));
            }
        }
        out
    }

    /// Calls `f` on each parameter tensor; σ and γ are re-derived from
    /// their raw storage after each raw tensor is visited.
    pub fn visit_params_mut(&mut self, include_gates: bool, mut f: impl FnMut(ParamId, &mut [f64])) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            f(ParamId::new(i, ParamKind::WeightMu), l.weights.mu_mut());
            f(ParamId::new(i, ParamKind::WeightRaw), &mut l.weights.sigma_raw_mut());
            f(ParamId::new(i, ParamKind::BiasMu), l.bias.mu_mut());
            f(ParamId::new(i, ParamKind::BiasRaw), &mut l.bias.sigma_raw_mut());
            if include_gates {
                if let Some(g) = &mut l.gate {
                    f(ParamId::new(i, ParamKind::GateLogit), &mut g.logits_mut());
                }
            }
        }
    }

    pub fn flat_params(&self, include_gates: bool) -> Vec<f64> {
        let mut v = Vec::new();
        for l in &self.layers {
            v.extend_from_slice(l.weights.mu());
            v.extend_from_slice(l.weights.sigma_raw());
            v.extend_from_slice(l.bias.mu());
            v.extend_from_slice(l.bias.sigma_raw());
            if include_gates {
                if let Some(g) = &l.gate {
                    v.extend_from_slice(g.logits());
                }
            }
        }
        v
    }

    pub fn set_flat_params(&mut self, include_gates: bool, values: &[f64]) -> Result<()> {
        let expected = self.flat_params(include_gates).len();
        if values.len() != expected {
            return Err(Error::shape("set_flat_params", expected, values.len()));
        }
        let mut offset = 0;
        self.visit_params_mut(include_gates, |_, t| {
            t.copy_from_slice(&values[offset..offset + t.len()]);
            offset += t.len();
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_net(kind: LayerKind) -> Network {
        Network::new(NetworkSpec::mlp(3, &[5], 4, kind, LayerKind::Gaussian), PriorConfig::default(), 0.5).unwrap()
    }

    #[test]
    fn rows_are_probabilities() {
        let mut net = small_net(LayerKind::SpikeSlab);
        let x = DenseMatrix::from_rows(&[vec![0.1, 2.0, -1.0], vec![3.0, 0.0, 0.5]]).unwrap();
        let p = net.forward(&x, &mut NoiseStreams::new(1), GateMode::Hard).unwrap().0;
        for r in p.iter_rows() {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_depth_is_softmax_of_input() {
        let spec = NetworkSpec {
            input: vec![3],
            classes: 3,
            layers: vec![],
        };
        let mut net = Network::new(spec, PriorConfig::default(), 0.5).unwrap();
        let x = DenseMatrix::from_rows(&[vec![0.1, 2.0, -1.0]]).unwrap();
        let p = net.forward(&x, &mut NoiseStreams::new(1), GateMode::Hard).unwrap().0;
        assert_eq!(p, softmax_rows(&x));
    }

    #[test]
    fn seeded_forward_is_reproducible() {
        let mut a = small_net(LayerKind::SpikeSlab);
        let mut b = a.clone();
        let x = DenseMatrix::from_rows(&[vec![0.1, 2.0, -1.0]]).unwrap();
        let pa = a.forward(&x, &mut NoiseStreams::new(3), GateMode::Hard).unwrap().0;
        let pb = b.forward(&x, &mut NoiseStreams::new(3), GateMode::Hard).unwrap().0;
        assert_eq!(pa, pb);
    }

    #[test]
    fn predict_mc_definitions() {
        let mut net = small_net(LayerKind::SpikeSlab);
        let x = DenseMatrix::from_rows(&[vec![0.1, 2.0, -1.0], vec![1.0, 1.0, 1.0]]).unwrap();
        let one = net.predict_mc(&x, &mut NoiseStreams::new(4), 1).unwrap();
        let single = net.predict(&x, &mut NoiseStreams::new(4)).unwrap();
        assert_eq!(one, single);

        let mut rng = NoiseStreams::new(4);
        let a = net.predict(&x, &mut rng).unwrap();
        let b = net.predict(&x, &mut rng).unwrap();
        let two = net.predict_mc(&x, &mut NoiseStreams::new(4), 2).unwrap();
        for ((t, a), b) in two.data().iter().zip(a.data()).zip(b.data()) {
            assert!((t - (a + b) / 2.0).abs() < 1e-15);
        }
        for r in two.iter_rows() {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(net.predict_mc(&x, &mut rng, 0).is_err());
    }

    #[test]
    fn spec_validation() {
        let bad = NetworkSpec::mlp(3, &[4], 2, LayerKind::Gaussian, LayerKind::Gaussian);
        let mut wrong = bad.clone();
        wrong.classes = 3;
        assert!(matches!(wrong.topologies(), Err(Error::Config { .. })));
        let conv_after_dense = NetworkSpec {
            input: vec![4],
            classes: 2,
            layers: vec![LayerSpec::conv(LayerKind::Gaussian, 2, 3, 1)],
        };
        assert!(conv_after_dense.topologies().is_err());
        assert!(bad.topologies().is_ok());
    }

    #[test]
    fn conv_then_dense_chains() {
        let spec = NetworkSpec {
            input: vec![1, 6, 6],
            classes: 3,
            layers: vec![
                LayerSpec::conv(LayerKind::SpikeSlab, 2, 3, 0),
                LayerSpec::dense(LayerKind::Gaussian, 3, Activation::Identity),
            ],
        };
        let topo = spec.topologies().unwrap();
        assert_eq!(topo[1], Topology::Dense { fan_in: 32, units: 3 });
    }

    #[test]
    fn flat_params_round_trip() {
        let mut net = small_net(LayerKind::SpikeSlab);
        let mut v = net.flat_params(true);
        for (i, x) in v.iter_mut().enumerate() {
            *x = (i as f64 * 0.37).sin();
        }
        net.set_flat_params(true, &v).unwrap();
        assert_eq!(net.flat_params(true), v);
        let g = net.layers[0].gate.as_ref().unwrap();
        assert_eq!(g.gamma(0), crate::numeric::logistic(g.logits()[0]));
    }
}
