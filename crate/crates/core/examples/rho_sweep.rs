//! Effect of the perturbation factor on ensemble accuracy and diversity.
//! The step is ρσ and σ stays near its 1e-4 init on this task, so the
//! differences only show in the later digits.

use sebays::cli::{self, SweepAxis};
use sebays::config::RunConfig;
use sebays::trainer::TrainMode;

fn main() -> sebays::Result<()> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../target/runs/rho-sweep");
    let mut cfg = RunConfig::two_moons(TrainMode::SebaysFreeze, &dir);
    cfg.trainer.plan.t0 = 40;
    cfg.trainer.plan.t_ex = 20;
    cfg.eval.corruptions.clear();
    let values: Vec<String> = ["0", "1", "3", "10", "30"].map(String::from).to_vec();
    for r in cli::cmd_sweep(&cfg, SweepAxis::Rho, &values)? {
        println!(
            "rho {:>3}: ensemble acc {:.4} nll {:.6} ece {:.6}, d_dis {:.4} d_kl {:.3e}",
            r.value,
            r.ensemble_acc,
            r.ensemble_nll,
            r.ensemble_ece,
            r.d_dis.unwrap_or(0.0),
            r.d_kl.unwrap_or(0.0)
        );
    }
    println!("table in {}", dir.join("sweep-rho.csv").display());
    Ok(())
}
