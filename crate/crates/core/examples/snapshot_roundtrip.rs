//! A saved learner reloads bit-identically and predicts the same
//! probabilities under the same evaluation stream.

use sebays::cli;
use sebays::config::RunConfig;
use sebays::model::NoiseStreams;
use sebays::snapshot;
use sebays::trainer::TrainMode;

fn main() -> sebays::Result<()> {
    let dir = std::env::temp_dir().join("sebays-snapshot-example");
    let mut cfg = RunConfig::two_moons(TrainMode::SebaysFreeze, &dir);
    cfg.trainer.plan.t0 = 10;
    cfg.trainer.plan.t_ex = 4;
    cfg.trainer.plan.m = 2;
    let run = cli::cmd_train(&cfg)?;

    let path = dir.join(cli::snapshot_file(1));
    let loaded = snapshot::load(&path)?;
    println!("{}: {} bytes, header {:?}", path.display(), std::fs::metadata(&path).unwrap().len(), loaded.header.epoch_start..=loaded.header.epoch_end);
    assert_eq!(loaded, run.snapshots[0]);

    let data = cli::prepare_data(&cfg)?;
    let mut x = data.test.features.clone();
    data.normalization.as_ref().unwrap().apply_matrix(&mut x, None)?;
    let mut a = run.snapshots[0].network.clone();
    let mut b = loaded.network;
    let pa = a.predict_mc(&x, &mut NoiseStreams::for_eval(cfg.seed, 1), 8)?;
    let pb = b.predict_mc(&x, &mut NoiseStreams::for_eval(cfg.seed, 1), 8)?;
    println!("predictions identical: {}", pa == pb);
    Ok(())
}
