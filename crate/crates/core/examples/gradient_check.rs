//! Analytic ELBO gradient against central differences, with fixed noise.

use sebays::layers::{GateMode, LayerKind, PriorConfig};
use sebays::model::{Network, NetworkSpec, NoiseStreams};
use sebays::numeric::{finite_diff_gradient, relative_error, DenseMatrix, RngStream};
use sebays::objective::{elbo_gradient, elbo_with_noise, ElboConfig};
use sebays::trainer::{initialize, InitConfig};

fn main() {
    let spec = NetworkSpec::mlp(2, &[8, 8], 3, LayerKind::SpikeSlab, LayerKind::Gaussian);
    let mut net = Network::new(spec, PriorConfig::default(), 0.5).unwrap();
    let mut rng = RngStream::new(4, 0);
    // γ near 0.5 keeps the relaxed gates away from saturation
    let init = InitConfig { sigma: 0.1, gamma: 0.6 };
    initialize(&mut net, &init, &mut rng);

    let x = DenseMatrix::from_rows(&(0..5).map(|_| vec![rng.standard_normal(), rng.standard_normal()]).collect::<Vec<_>>()).unwrap();
    let y: Vec<usize> = (0..5).map(|_| rng.below(3)).collect();
    let cfg = ElboConfig { dataset_size: 50 };

    for (mode, gates) in [(GateMode::Relaxed, true), (GateMode::Hard, false)] {
        let noise = net.sample_noise(&mut NoiseStreams::new(9), mode);
        let (terms, cache) = elbo_with_noise(&mut net, &x, &y, noise.clone(), &cfg, mode).unwrap();
        let analytic = elbo_gradient(&net, &cache, &terms, &y, gates).unwrap().flatten(gates);
        let mut probe = net.clone();
        let numeric = finite_diff_gradient(
            |p| {
                probe.set_flat_params(gates, p).unwrap();
                elbo_with_noise(&mut probe, &x, &y, noise.clone(), &cfg, mode).unwrap().0.loss
            },
            &net.flat_params(gates),
            1e-5,
        )
        .unwrap();
        let worst = analytic.iter().zip(&numeric).map(|(a, n)| relative_error(*a, *n, 1e-4)).fold(0.0, f64::max);
        println!("{mode:?}: {} partials, max rel err {worst:.2e}", analytic.len());
    }
}
