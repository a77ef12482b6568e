use serde::{Deserialize, Serialize};

use super::gate::{relax, NodeGate};
use super::kl::{bernoulli_kl, gaussian_kl_entry, gaussian_kl_tensor};
use super::tensor::VariationalTensor;
use crate::error::{Error, Result};
use crate::numeric::{DenseMatrix, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    Gaussian,
    SpikeSlab,
}

/// How gated layers pick the per-node multiplier in a forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateMode {
    /// Draw `u`, multiply by the hard indicator `z`; gradients for γ flow
    /// through the relaxed `z̃` (straight-through).
    Hard,
    /// Draw `u`, multiply by `z̃` itself. The loss is then smooth in γ and
    /// the backward pass is its exact gradient.
    Relaxed,
    /// Use the stored binary mask; no `u` is drawn.
    FrozenMask,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    /// Prior slab standard deviation σ₀.
    pub sigma0: f64,
    /// Prior inclusion probability λ.
    pub lambda: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            sigma0: 1.0,
            lambda: 0.5,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err(Error::config("prior.sigma0", "must be positive and finite"));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::config("prior.lambda", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Linear structure behind a layer. Convolutions are stride 1 with
/// symmetric zero padding; inputs and outputs are channel-major
/// (`[c][y][x]`) per example row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    Dense {
        fan_in: usize,
        units: usize,
    },
    Conv {
        in_channels: usize,
        height: usize,
        width: usize,
        out_channels: usize,
        kernel: usize,
        padding: usize,
    },
}

impl Topology {
    /// Nodes (dense) or output channels (conv); the unit a gate acts on.
    pub fn units(&self) -> usize {
        match *self {
            Topology::Dense { units, .. } => units,
            Topology::Conv { out_channels, .. } => out_channels,
        }
    }

    /// Weights incident onto one unit.
    pub fn unit_fan_in(&self) -> usize {
        match *self {
            Topology::Dense { fan_in, .. } => fan_in,
            Topology::Conv {
                in_channels,
                kernel,
                ..
            } => in_channels * kernel * kernel,
        }
    }

    pub fn input_len(&self) -> usize {
        match *self {
            Topology::Dense { fan_in, .. } => fan_in,
            Topology::Conv {
                in_channels,
                height,
                width,
                ..
            } => in_channels * height * width,
        }
    }

    pub fn out_hw(&self) -> (usize, usize) {
        match *self {
            Topology::Dense { .. } => (1, 1),
            Topology::Conv {
                height,
                width,
                kernel,
                padding,
                ..
            } => (height + 2 * padding + 1 - kernel, width + 2 * padding + 1 - kernel),
        }
    }

    /// Output columns per unit.
    pub fn positions(&self) -> usize {
        let (h, w) = self.out_hw();
        h * w
    }

    pub fn output_len(&self) -> usize {
        self.units() * self.positions()
    }
}

/// Frozen noise for one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerNoise {
    pub eps_w: Vec<f64>,
    pub eps_b: Vec<f64>,
    /// One uniform per unit; empty for ungated layers and frozen masks.
    pub u: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LayerCache {
    input: DenseMatrix,
    theta_w: Vec<f64>,
    noise: LayerNoise,
    pre: DenseMatrix,
    act: DenseMatrix,
    factor: Vec<f64>,
    soft: Vec<f64>,
    mode: GateMode,
}

impl LayerCache {
    pub fn noise(&self) -> &LayerNoise {
        &self.noise
    }
}

/// Gradients for one layer, laid out like the layer's own tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads {
    pub w_mu: Vec<f64>,
    pub w_raw: Vec<f64>,
    pub b_mu: Vec<f64>,
    pub b_raw: Vec<f64>,
    /// `None` for Gaussian layers and for gates that are not being learned.
    pub gate_logit: Option<Vec<f64>>,
}

impl LayerGrads {
    pub fn zeros_like(layer: &VariationalLayer, with_gate: bool) -> Self {
        let nw = layer.weights.len();
        let nb = layer.bias.len();
        Self {
            w_mu: vec![0.0; nw],
            w_raw: vec![0.0; nw],
            b_mu: vec![0.0; nb],
            b_raw: vec![0.0; nb],
            gate_logit: match (&layer.gate, with_gate) {
                (Some(g), true) => Some(vec![0.0; g.len()]),
                _ => None,
            },
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self
            .w_mu
            .iter_mut()
            .chain(&mut self.w_raw)
            .chain(&mut self.b_mu)
            .chain(&mut self.b_raw)
        {
            *v *= s;
        }
        if let Some(g) = &mut self.gate_logit {
            for v in g {
                *v *= s;
            }
        }
    }
}

/// A variational layer: mean-field Gaussian weights and biases, optionally
/// gated per unit by a spike-and-slab indicator.
///
/// Weights are stored unit-major: row `j` holds the weights incident onto
/// unit `j`, so a gate and its slab share a row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalLayer {
    pub topology: Topology,
    pub activation: Activation,
    pub weights: VariationalTensor,
    pub bias: VariationalTensor,
    pub gate: Option<NodeGate>,
    pub prior: PriorConfig,
}

impl VariationalLayer {
    pub fn new(
        kind: LayerKind,
        topology: Topology,
        activation: Activation,
        prior: PriorConfig,
        temperature: f64,
    ) -> Self {
        let units = topology.units();
        let gate = match kind {
            LayerKind::Gaussian => None,
            LayerKind::SpikeSlab => Some(NodeGate::new(units, 0.5, temperature)),
        };
        Self {
            topology,
            activation,
            weights: VariationalTensor::new(units, topology.unit_fan_in(), 0.0, prior.sigma0),
            bias: VariationalTensor::new(units, 1, 0.0, prior.sigma0),
            gate,
            prior,
        }
    }

    pub fn kind(&self) -> LayerKind {
        if self.gate.is_some() {
            LayerKind::SpikeSlab
        } else {
            LayerKind::Gaussian
        }
    }

    pub fn units(&self) -> usize {
        self.topology.units()
    }

    pub fn sample_noise(&self, weight_rng: &mut RngStream, gate_rng: &mut RngStream, mode: GateMode) -> LayerNoise {
        let mut eps_w = vec![0.0; self.weights.len()];
        weight_rng.fill_standard_normal(&mut eps_w);
        let mut eps_b = vec![0.0; self.bias.len()];
        weight_rng.fill_standard_normal(&mut eps_b);
        let u = match (&self.gate, mode) {
            (Some(g), GateMode::Hard | GateMode::Relaxed) => {
                let mut u = vec![0.0; g.len()];
                gate_rng.fill_uniform(&mut u);
                u
            }
            _ => Vec::new(),
        };
        LayerNoise { eps_w, eps_b, u }
    }

    pub fn forward(&mut self, input: &DenseMatrix, noise: LayerNoise, mode: GateMode) -> Result<(DenseMatrix, LayerCache)> {
        if input.cols() != self.topology.input_len() {
            return Err(Error::shape("layer forward input width", self.topology.input_len(), input.cols()));
        }
        if noise.eps_w.len() != self.weights.len() || noise.eps_b.len() != self.bias.len() {
            return Err(Error::shape("layer noise", self.weights.len(), noise.eps_w.len()));
        }
        let units = self.units();
        let (factor, soft) = match &mut self.gate {
            None => (vec![1.0; units], Vec::new()),
            Some(gate) => match mode {
                GateMode::FrozenMask => {
                    let mask = gate.mask().ok_or(Error::MissingMask(0))?;
                    let factor: Vec<f64> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
                    gate.record(mask.to_vec(), Vec::new());
                    (factor, Vec::new())
                }
                GateMode::Hard | GateMode::Relaxed => {
                    if noise.u.len() != units {
                        return Err(Error::shape("gate uniforms", units, noise.u.len()));
                    }
                    let tau = gate.temperature();
                    let draws: Vec<_> = gate
                        .logits()
                        .iter()
                        .zip(&noise.u)
                        .map(|(&l, &u)| relax(l, u, tau))
                        .collect();
                    let soft: Vec<f64> = draws.iter().map(|d| d.soft).collect();
                    let hard: Vec<bool> = draws.iter().map(|d| d.hard).collect();
                    let factor = if mode == GateMode::Hard {
                        hard.iter().map(|&h| if h { 1.0 } else { 0.0 }).collect()
                    } else {
                        soft.clone()
                    };
                    gate.record(hard, soft.clone());
                    (factor, soft)
                }
            },
        };

        let mut theta_w = Vec::new();
        self.weights.sample_into(&noise.eps_w, &mut theta_w);
        let mut theta_b = Vec::new();
        self.bias.sample_into(&noise.eps_b, &mut theta_b);

        let pre = linear_forward(&self.topology, input, &theta_w, &theta_b)?;
        let mut act = pre.clone();
        if self.activation == Activation::Relu {
            act.map_inplace(|v| if v > 0.0 { v } else { 0.0 });
        }
        let positions = self.topology.positions();
        let mut out = act.clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            for (j, &f) in factor.iter().enumerate() {
                for v in &mut row[j * positions..(j + 1) * positions] {
                    *v = if f == 0.0 { 0.0 } else { *v * f };
                }
            }
        }
        let cache = LayerCache {
            input: input.clone(),
            theta_w,
            noise,
            pre,
            act,
            factor,
            soft,
            mode,
        };
        Ok((out, cache))
    }

    /// Gradients of a scalar loss through this layer given `∂loss/∂output`.
    pub fn backward(&self, cache: &LayerCache, grad_out: &DenseMatrix) -> Result<(DenseMatrix, LayerGrads)> {
        let batch = cache.input.rows();
        if grad_out.shape() != (batch, self.topology.output_len()) {
            return Err(Error::shape(
                "layer backward grad",
                format!("{}x{}", batch, self.topology.output_len()),
                format!("{}x{}", grad_out.rows(), grad_out.cols()),
            ));
        }
        if cache.theta_w.len() != self.weights.len() {
            return Err(Error::MissingCache("cache does not belong to this layer"));
        }
        let units = self.units();
        let positions = self.topology.positions();

        let learn_gate = self.gate.is_some() && cache.mode != GateMode::FrozenMask;
        let mut g_soft = vec![0.0; if learn_gate { units } else { 0 }];
        let mut g_pre = DenseMatrix::zeros(batch, grad_out.cols());
        for n in 0..batch {
            let go = grad_out.row(n);
            let act = cache.act.row(n);
            let pre = cache.pre.row(n);
            let gp = g_pre.row_mut(n);
            for j in 0..units {
                let f = cache.factor[j];
                for c in j * positions..(j + 1) * positions {
                    if learn_gate {
                        g_soft[j] += go[c] * act[c];
                    }
                    let d_act = match self.activation {
                        Activation::Relu if pre[c] <= 0.0 => 0.0,
                        _ => 1.0,
                    };
                    gp[c] = go[c] * f * d_act;
                }
            }
        }

        let (g_input, g_theta_w, g_theta_b) = linear_backward(&self.topology, &cache.input, &cache.theta_w, &g_pre)?;

        let jw = self.weights.sigma_jacobian();
        let w_raw = g_theta_w
            .iter()
            .zip(&cache.noise.eps_w)
            .zip(&jw)
            .map(|((g, e), j)| g * e * j)
            .collect();
        let jb = self.bias.sigma_jacobian();
        let b_raw = g_theta_b
            .iter()
            .zip(&cache.noise.eps_b)
            .zip(&jb)
            .map(|((g, e), j)| g * e * j)
            .collect();

        let gate_logit = if learn_gate {
            let tau = self.gate.as_ref().map_or(1.0, NodeGate::temperature);
            Some(
                g_soft
                    .iter()
                    .zip(&cache.soft)
                    .map(|(g, &s)| g * s * (1.0 - s) / tau)
                    .collect(),
            )
        } else {
            None
        };

        Ok((
            g_input,
            LayerGrads {
                w_mu: g_theta_w,
                w_raw,
                b_mu: g_theta_b,
                b_raw,
                gate_logit,
            },
        ))
    }

    /// KL from the variational posterior to the prior, biases included.
    ///
    /// Gaussian layers: Σ KL(N(μ, σ²) ‖ N(0, σ₀²)). Spike-and-slab layers:
    /// Σⱼ [KL(Bern(γⱼ) ‖ Bern(λ)) + γⱼ·Σₖ KL(N(μⱼₖ, σⱼₖ²) ‖ N(0, σ₀²))];
    /// the spike components coincide and cancel.
    pub fn kl(&self) -> f64 {
        let s0 = self.prior.sigma0;
        let bias_kl = gaussian_kl_tensor(&self.bias, s0);
        match &self.gate {
            None => gaussian_kl_tensor(&self.weights, s0) + bias_kl,
            Some(gate) => {
                let fan = self.topology.unit_fan_in();
                let mu = self.weights.mu();
                let sd = self.weights.sigma();
                let mut total = 0.0;
                for j in 0..gate.len() {
                    let g = gate.gamma(j);
                    let slab: f64 = (j * fan..(j + 1) * fan)
                        .map(|i| gaussian_kl_entry(mu[i], sd[i], s0))
                        .fold(0.0, |a, b| a + b);
                    total += bernoulli_kl(g, self.prior.lambda) + g * slab;
                }
                total + bias_kl
            }
        }
    }

    /// Adds `scale · ∂KL/∂params` into `grads`. Gate gradients are only
    /// accumulated when `grads.gate_logit` is present.
    pub fn add_kl_grad(&self, scale: f64, grads: &mut LayerGrads) {
        let s0 = self.prior.sigma0;
        let inv_var0 = 1.0 / (s0 * s0);
        let fan = self.topology.unit_fan_in();
        let gammas = self.gate.as_ref().map(|g| g.gammas().to_vec());

        add_gaussian_kl_grad(&self.bias, inv_var0, scale, None, 1, &mut grads.b_mu, &mut grads.b_raw);
        add_gaussian_kl_grad(
            &self.weights,
            inv_var0,
            scale,
            gammas.as_deref(),
            fan,
            &mut grads.w_mu,
            &mut grads.w_raw,
        );

        if let (Some(gate), Some(g_logit)) = (&self.gate, grads.gate_logit.as_mut()) {
            let lambda = self.prior.lambda;
            let prior_logit = (lambda / (1.0 - lambda)).ln();
            let mu = self.weights.mu();
            let sd = self.weights.sigma();
            for j in 0..gate.len() {
                let l = gate.logits()[j];
                let g = gate.gamma(j);
                let slab: f64 = (j * fan..(j + 1) * fan)
                    .map(|i| gaussian_kl_entry(mu[i], sd[i], s0))
                    .fold(0.0, |a, b| a + b);
                // d/dγ [Bernoulli KL + γ·slab] = logit(γ) − logit(λ) + slab
                g_logit[j] += scale * g * (1.0 - g) * (l - prior_logit + slab);
            }
        }
    }

    /// Exact zero node outputs are independent of that node's weights.
    pub fn node_weights(&self, j: usize) -> std::ops::Range<usize> {
        let fan = self.topology.unit_fan_in();
        j * fan..(j + 1) * fan
    }
}

fn add_gaussian_kl_grad(
    t: &VariationalTensor,
    inv_var0: f64,
    scale: f64,
    unit_weight: Option<&[f64]>,
    fan: usize,
    g_mu: &mut [f64],
    g_raw: &mut [f64],
) {
    let jac = t.sigma_jacobian();
    for i in 0..t.len() {
        let w = unit_weight.map_or(1.0, |g| g[i / fan]);
        let mu = t.mu()[i];
        let s = t.sigma()[i];
        g_mu[i] += scale * w * mu * inv_var0;
        g_raw[i] += scale * w * (-1.0 / s + s * inv_var0) * jac[i];
    }
}

fn linear_forward(topo: &Topology, input: &DenseMatrix, theta_w: &[f64], theta_b: &[f64]) -> Result<DenseMatrix> {
    let units = topo.units();
    let fan = topo.unit_fan_in();
    let w = DenseMatrix::from_vec(units, fan, theta_w.to_vec())?;
    match *topo {
        Topology::Dense { .. } => {
            let mut out = input.matmul_t(&w)?;
            for r in 0..out.rows() {
                for (v, b) in out.row_mut(r).iter_mut().zip(theta_b) {
                    *v += b;
                }
            }
            Ok(out)
        }
        Topology::Conv {
            in_channels,
            height,
            width,
            kernel,
            padding,
            ..
        } => {
            let positions = topo.positions();
            let mut out = DenseMatrix::zeros(input.rows(), topo.output_len());
            for n in 0..input.rows() {
                let patches = im2col(input.row(n), in_channels, height, width, kernel, padding);
                let y = patches.matmul_t(&w)?; // positions × units
                let row = out.row_mut(n);
                for p in 0..positions {
                    for j in 0..units {
                        row[j * positions + p] = y.get(p, j) + theta_b[j];
                    }
                }
            }
            Ok(out)
        }
    }
}

fn linear_backward(
    topo: &Topology,
    input: &DenseMatrix,
    theta_w: &[f64],
    g_pre: &DenseMatrix,
) -> Result<(DenseMatrix, Vec<f64>, Vec<f64>)> {
    let units = topo.units();
    let fan = topo.unit_fan_in();
    let w = DenseMatrix::from_vec(units, fan, theta_w.to_vec())?;
    match *topo {
        Topology::Dense { .. } => {
            let g_w = g_pre.t_matmul(input)?;
            let mut g_b = vec![0.0; units];
            for r in 0..g_pre.rows() {
                for (acc, v) in g_b.iter_mut().zip(g_pre.row(r)) {
                    *acc += v;
                }
            }
            let g_in = g_pre.matmul(&w)?;
            Ok((g_in, g_w.into_vec(), g_b))
        }
        Topology::Conv {
            in_channels,
            height,
            width,
            kernel,
            padding,
            ..
        } => {
            let positions = topo.positions();
            let mut g_w = DenseMatrix::zeros(units, fan);
            let mut g_b = vec![0.0; units];
            let mut g_in = DenseMatrix::zeros(input.rows(), input.cols());
            for n in 0..input.rows() {
                let patches = im2col(input.row(n), in_channels, height, width, kernel, padding);
                let row = g_pre.row(n);
                let mut g = DenseMatrix::zeros(positions, units);
                for j in 0..units {
                    for p in 0..positions {
                        let v = row[j * positions + p];
                        g.set(p, j, v);
                        g_b[j] += v;
                    }
                }
                let gw_n = g.t_matmul(&patches)?;
                for (acc, v) in g_w.data_mut().iter_mut().zip(gw_n.data()) {
                    *acc += v;
                }
                let g_patches = g.matmul(&w)?;
                col2im_add(&g_patches, in_channels, height, width, kernel, padding, g_in.row_mut(n));
            }
            Ok((g_in, g_w.into_vec(), g_b))
        }
    }
}

/// Patch matrix (`positions × channels·k·k`) for one channel-major image.
fn im2col(x: &[f64], channels: usize, height: usize, width: usize, k: usize, pad: usize) -> DenseMatrix {
    let oh = height + 2 * pad + 1 - k;
    let ow = width + 2 * pad + 1 - k;
    let q = channels * k * k;
    let mut out = DenseMatrix::zeros(oh * ow, q);
    for oy in 0..oh {
        for ox in 0..ow {
            let row = out.row_mut(oy * ow + ox);
            for c in 0..channels {
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = (oy + ky) as isize - pad as isize;
                        let ix = (ox + kx) as isize - pad as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < height && (ix as usize) < width {
                            row[(c * k + ky) * k + kx] = x[(c * height + iy as usize) * width + ix as usize];
                        }
                    }
                }
            }
        }
    }
    out
}

fn col2im_add(cols: &DenseMatrix, channels: usize, height: usize, width: usize, k: usize, pad: usize, out: &mut [f64]) {
    let oh = height + 2 * pad + 1 - k;
    let ow = width + 2 * pad + 1 - k;
    for oy in 0..oh {
        for ox in 0..ow {
            let row = cols.row(oy * ow + ox);
            for c in 0..channels {
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = (oy + ky) as isize - pad as isize;
                        let ix = (ox + kx) as isize - pad as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < height && (ix as usize) < width {
                            out[(c * height + iy as usize) * width + ix as usize] += row[(c * k + ky) * k + kx];
                        }
                    }
                }
            }
        }
    }
}
