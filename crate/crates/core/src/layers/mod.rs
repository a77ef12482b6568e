//! Variational layer families: mean-field Gaussian and node-gated
//! spike-and-slab, with reparameterized sampling, the binary concrete
//! relaxation of the gates, closed-form KL terms and hand-written backward
//! passes.

mod gate;
mod kl;
mod layer;
mod tensor;

pub use gate::{relax, LogitGuard, NodeGate, Relaxed, DEFAULT_TEMPERATURE};
pub use kl::{bernoulli_kl, gaussian_kl_entry, gaussian_kl_tensor};
pub use layer::{
    Activation, GateMode, LayerCache, LayerGrads, LayerKind, LayerNoise, PriorConfig, Topology,
    VariationalLayer,
};
pub use tensor::{RawGuard, VariationalTensor};

/// `Σ KL(N(μ, σ²) ‖ N(0, σ₀²))` over a Gaussian layer's weights and biases.
pub fn kl_gaussian(layer: &VariationalLayer) -> f64 {
    gaussian_kl_tensor(&layer.weights, layer.prior.sigma0) + gaussian_kl_tensor(&layer.bias, layer.prior.sigma0)
}

/// Spike-and-slab KL of a gated layer (biases included as plain Gaussians).
/// Falls back to [`kl_gaussian`] for ungated layers.
pub fn kl_spike_slab(layer: &VariationalLayer) -> f64 {
    layer.kl()
}
