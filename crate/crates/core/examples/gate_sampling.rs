//! Hard samples of the relaxed node gate are Bernoulli(γ) at any temperature.

use sebays::layers::{relax, DEFAULT_TEMPERATURE};
use sebays::numeric::{logit, RngStream};

fn main() {
    let mut rng = RngStream::new(0, 1);
    let n = 200_000;
    println!("gamma  tau  E[z]    E[z~]");
    for tau in [DEFAULT_TEMPERATURE, 2.0 / 3.0, 1.0] {
        for gamma in [0.1, 0.5, 0.9] {
            let (mut hard, mut soft) = (0usize, 0.0);
            for _ in 0..n {
                let r = relax(logit(gamma), rng.uniform(), tau);
                hard += r.hard as usize;
                soft += r.soft;
            }
            println!("{gamma:<6} {tau:.2} {:.4}  {:.4}", hard as f64 / n as f64, soft / n as f64);
        }
    }
}
