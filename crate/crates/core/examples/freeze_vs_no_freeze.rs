//! Node gates frozen after exploration against gates that keep training.
//! Prints the remaining parameter ratio every 25 epochs from the end of
//! exploration.

use sebays::cli;
use sebays::config::RunConfig;
use sebays::layers::GateMode;
use sebays::model::Network;
use sebays::sparsity::sparsity_report;
use sebays::trainer::{train, EpochLog, TrainInputs, TrainMode, TrainObserver};

struct Sparsity(Vec<(usize, f64, bool)>);

impl TrainObserver for Sparsity {
    fn on_epoch_end(&mut self, net: &Network, log: &EpochLog) -> sebays::Result<()> {
        let r = sparsity_report(net, 0.5);
        self.0.push((log.epoch, r.remaining_param_ratio, net.default_gate_mode() == GateMode::FrozenMask));
        Ok(())
    }
}

fn main() -> sebays::Result<()> {
    for mode in [TrainMode::SebaysFreeze, TrainMode::SebaysNoFreeze] {
        let cfg = RunConfig::two_moons(mode, "unused");
        let data = cli::prepare_data(&cfg)?;
        let inputs = TrainInputs {
            spec: cfg.network.clone(),
            prior: cfg.prior,
            train: &data.train,
            normalization: data.normalization.clone(),
            trajectory_inputs: None,
        };
        let mut obs = Sparsity(Vec::new());
        train(&cfg.trainer, inputs, &mut obs)?;
        println!("{mode}:");
        for (epoch, ratio, frozen) in obs.0.iter().skip(cfg.trainer.plan.t0 - 1).step_by(25) {
            println!("  epoch {epoch:>3} remaining params {ratio:.3} frozen {frozen}");
        }
    }
    Ok(())
}
