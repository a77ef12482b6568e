//! Closed-form KL of a spike-and-slab layer against a Monte Carlo estimate.

use sebays::layers::{kl_spike_slab, Activation, LayerKind, PriorConfig, Topology, VariationalLayer};
use sebays::numeric::{logit, RngStream};

fn log_normal(x: f64, mu: f64, sd: f64) -> f64 {
    -0.5 * ((x - mu) / sd).powi(2) - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

fn main() {
    let prior = PriorConfig { sigma0: 1.0, lambda: 0.3 };
    let topo = Topology::Dense { fan_in: 3, units: 4 };
    let mut layer = VariationalLayer::new(LayerKind::SpikeSlab, topo, Activation::Relu, prior, 0.5);
    let mut rng = RngStream::new(1, 0);
    for t in [&mut layer.weights, &mut layer.bias] {
        for i in 0..t.len() {
            t.set_sigma(i, 0.3 + rng.uniform());
            t.mu_mut()[i] = rng.standard_normal();
        }
    }
    for (j, x) in layer.gate.as_mut().unwrap().logits_mut().iter_mut().enumerate() {
        *x = logit(0.2 + 0.2 * j as f64);
    }

    let exact = kl_spike_slab(&layer);
    let gate = layer.gate.as_ref().unwrap();
    let samples = 200_000;
    let mut total = 0.0;
    for _ in 0..samples {
        // biases are ungated Gaussians
        for (&m, &s) in layer.bias.mu().iter().zip(layer.bias.sigma()) {
            let th = m + s * rng.standard_normal();
            total += log_normal(th, m, s) - log_normal(th, 0.0, prior.sigma0);
        }
        for j in 0..gate.len() {
            let g = gate.gamma(j);
            if rng.uniform() < g {
                total += (g / prior.lambda).ln();
                for i in j * 3..(j + 1) * 3 {
                    let (m, s) = (layer.weights.mu()[i], layer.weights.sigma()[i]);
                    let th = m + s * rng.standard_normal();
                    total += log_normal(th, m, s) - log_normal(th, 0.0, prior.sigma0);
                }
            } else {
                total += ((1.0 - g) / (1.0 - prior.lambda)).ln();
            }
        }
    }
    let mc = total / samples as f64;
    println!("closed form {exact:.5}");
    println!("monte carlo {mc:.5} ({samples} samples, rel diff {:.3}%)", 100.0 * (mc - exact).abs() / exact);
}
