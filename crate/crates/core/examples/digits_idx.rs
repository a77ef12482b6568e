//! Writes procedural digits as IDX files, then trains a dense Bayesian
//! sequential ensemble from them through the `idx` data source.
//! Point the paths at real MNIST files to train on MNIST instead.
//!
//! cargo run --release --example digits_idx

use std::path::Path;

use sebays::cli;
use sebays::config::{DataKind, OodKind, RunConfig};
use sebays::data::{procedural_digit_bytes, write_idx_images, write_idx_labels};
use sebays::layers::LayerKind;
use sebays::model::NetworkSpec;
use sebays::numeric::RngStream;
use sebays::trainer::TrainMode;

fn main() -> sebays::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../target/runs/digits-idx");
    let data = dir.join("data");
    std::fs::create_dir_all(&data).expect("create data dir");
    for (name, n, stream) in [("train", 3000, 11), ("test", 1000, 12)] {
        let (pixels, labels) = procedural_digit_bytes(n, &mut RngStream::new(0, stream));
        write_idx_images(&data.join(format!("{name}-images.idx")), 28, 28, &pixels)?;
        write_idx_labels(&data.join(format!("{name}-labels.idx")), &labels)?;
    }

    let mut cfg = RunConfig::two_moons(TrainMode::DenseBnn, dir.join("run"));
    cfg.network = NetworkSpec::mlp(784, &[64], 10, LayerKind::Gaussian, LayerKind::Gaussian);
    cfg.network.input = vec![1, 28, 28];
    cfg.data.kind = DataKind::Idx;
    cfg.data.train_images = Some(data.join("train-images.idx"));
    cfg.data.train_labels = Some(data.join("train-labels.idx"));
    cfg.data.test_images = Some(data.join("test-images.idx"));
    cfg.data.test_labels = Some(data.join("test-labels.idx"));
    cfg.trainer.plan.t0 = 10;
    cfg.trainer.plan.t_ex = 6;
    cfg.trainer.plan.m = 3;
    cfg.eval.corruptions.clear();
    cfg.eval.ood = OodKind::None;

    cli::cmd_train(&cfg)?;
    let out = cli::cmd_eval(&cfg.output_dir, &cfg)?;
    for r in &out.reports {
        println!("{:<10} acc {:.4} nll {:.4}", r.model, r.acc, r.nll);
    }
    Ok(())
}
