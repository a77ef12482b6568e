//! Train, evaluate and score diversity for the two-moons config, the same
//! steps as `sebays train`, `sebays eval` and `sebays diversity`.
//!
//! cargo run --release --example two_moons

use std::path::Path;

use sebays::cli;
use sebays::config::RunConfig;

fn main() -> sebays::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs/two-moons.toml");
    let cfg = RunConfig::load(&path)?;
    let run = cli::cmd_train(&cfg)?;
    let last = run.log.last().unwrap();
    println!("trained {} learners, final epoch nll {:.4}", run.snapshots.len(), last.nll);

    let out = cli::cmd_eval(&cfg.output_dir, &cfg)?;
    for r in &out.reports {
        let auroc = r.auroc.map(|a| format!("{a:.3}")).unwrap_or_default();
        println!("{:<10} mc={} acc {:.4} nll {:.4} ece {:.4} auroc {auroc}", r.model, r.mc, r.acc, r.nll, r.ece);
    }
    let d = cli::cmd_diversity(&cfg.output_dir, &cfg)?;
    println!("d_dis {:.4} d_kl {:.4}", d.d_dis, d.d_kl);
    println!("artifacts in {}", cfg.output_dir.display());
    Ok(())
}
