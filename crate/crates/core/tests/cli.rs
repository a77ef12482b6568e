use std::fs;
use std::path::Path;
use std::process::Command;

use sebays::cli::{self, SweepAxis};
use sebays::config::{DataKind, RunConfig};
use sebays::data::CorruptionKind;
use sebays::metrics::{ensemble_average, ensemble_diversity, accuracy, nll};
use sebays::numeric::DenseMatrix;
use sebays::schedule::{PhasePlan, Schedule};
use sebays::trainer::TrainMode;
use sebays::Error;

fn small(mode: TrainMode, dir: &Path, m: usize) -> RunConfig {
    let mut cfg = RunConfig::two_moons(mode, dir);
    cfg.seed = 3;
    cfg.data.n_train = 200;
    cfg.data.n_test = 100;
    cfg.trainer.batch_size = 32;
    cfg.trainer.trajectory_every = 2;
    cfg.trainer.plan = PhasePlan {
        t0: 6,
        t_ex: 4,
        m,
        ..PhasePlan::default()
    };
    cfg.eval.corruptions = vec![CorruptionKind::GaussianNoise, CorruptionKind::PixelDropout];
    cfg.eval.severities = vec![1, 3];
    cfg
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sebays"))
}

#[test]
fn train_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(TrainMode::SebaysFreeze, dir.path(), 3);
    let run = cli::cmd_train(&cfg).unwrap();
    assert_eq!(run.snapshots.len(), 3);
    for f in ["learner-1.snap", "learner-2.snap", "learner-3.snap", "train_log.csv", "sparsity.csv", "trajectory.csv", "config.toml", "normalization.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let log = fs::read_to_string(dir.path().join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 18);
    // 6 checkpoints of 100 examples
    let traj = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().count(), 1 + 6 * 100);
    assert_eq!(cli::load_run_config(dir.path()).unwrap(), cfg);
}

#[test]
fn missing_dataset_path_names_key_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(TrainMode::SebaysFreeze, &dir.path().join("out"), 2);
    cfg.data.kind = DataKind::Idx;
    cfg.data.train_images = Some(dir.path().join("nope-images"));
    let err = cli::cmd_train(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);

    let path = dir.path().join("run.toml");
    fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    let out = bin().arg("train").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("data.train_images"));
}

#[test]
fn unknown_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    let text = small(TrainMode::SebaysFreeze, &dir.path().join("out"), 2).to_toml().unwrap();
    fs::write(&path, text.replace("[trainer]\n", "[trainer]\nrhoo = 2\n")).unwrap();
    let out = bin().arg("train").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rhoo"));
}

#[test]
fn binary_runs_train_eval_diversity_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(&path, small(TrainMode::SebaysNoFreeze, Path::new("out"), 2).to_toml().unwrap()).unwrap();
    let st = bin().args(["train", path.to_str().unwrap(), "--set", "trainer.plan.m=3", "--set", "trainer.rho=2"]).status().unwrap();
    assert!(st.success());
    let run = dir.path().join("out");
    assert!(run.join("learner-3.snap").is_file());
    let saved = cli::load_run_config(&run).unwrap();
    assert_eq!(saved.trainer.rho, 2.0);
    assert!(bin().arg("eval").arg(&run).status().unwrap().success());
    assert!(run.join("metrics.json").is_file());
    let out = bin().arg("diversity").arg(&run).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("d_dis="));
}

#[test]
fn corrupt_snapshot_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(TrainMode::SebaysFreeze, dir.path(), 2);
    cli::cmd_train(&cfg).unwrap();
    let p = dir.path().join("learner-2.snap");
    let bytes = fs::read(&p).unwrap();
    fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
    let err = cli::cmd_eval(dir.path(), &cfg).unwrap_err();
    assert_eq!(err.exit_code(), 4, "{err}");
    let out = bin().arg("eval").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn single_snapshot_ensemble_equals_learner() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(TrainMode::SebaysFreeze, dir.path(), 1);
    cli::cmd_train(&cfg).unwrap();
    let out = cli::cmd_eval(dir.path(), &cfg).unwrap();
    let learner = out.reports.iter().find(|r| r.model == "learner-1").unwrap();
    let ens = out.reports.iter().find(|r| r.model == "ensemble").unwrap();
    assert_eq!((learner.acc, learner.nll, learner.ece), (ens.acc, ens.nll, ens.ece));
    assert_eq!(learner.corruptions, ens.corruptions);
    assert_eq!(ens.d_dis, None);
}

#[test]
fn eval_json_and_csv_agree() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(TrainMode::SebaysFreeze, dir.path(), 2);
    cfg.eval.mc = vec![1, 3];
    cli::cmd_train(&cfg).unwrap();
    cli::cmd_eval(dir.path(), &cfg).unwrap();
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    let reports = json["reports"].as_array().unwrap();
    let mut rdr = csv::Reader::from_path(dir.path().join("metrics.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), reports.len());
    let mut compared = 0;
    for (row, rep) in rows.iter().zip(reports) {
        for (h, v) in headers.iter().zip(row.iter()) {
            let expected = match h.split('.').collect::<Vec<_>>()[..] {
                [kind, sev, field] => rep["corruptions"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .find(|c| c["kind"] == kind && c["severity"].as_u64().unwrap().to_string() == sev)
                    .unwrap()[field]
                    .clone(),
                _ => rep[h].clone(),
            };
            match expected {
                serde_json::Value::String(s) => assert_eq!(s, v),
                serde_json::Value::Null => assert_eq!(v, ""),
                serde_json::Value::Number(n) => {
                    assert_eq!(n.as_f64().unwrap(), v.parse::<f64>().unwrap(), "{h}");
                }
                other => panic!("unexpected {other}"),
            }
            compared += 1;
        }
    }
    assert!(compared > 50);
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(TrainMode::SebaysNoFreeze, dir.path(), 2);
    let read = || {
        let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (p.display().to_string(), fs::read(&p).unwrap())
            })
            .collect();
        v.sort();
        v
    };
    cli::cmd_train(&cfg).unwrap();
    cli::cmd_eval(dir.path(), &cfg).unwrap();
    cli::cmd_diversity(dir.path(), &cfg).unwrap();
    let first = read();
    cli::cmd_train(&cfg).unwrap();
    cli::cmd_eval(dir.path(), &cfg).unwrap();
    cli::cmd_diversity(dir.path(), &cfg).unwrap();
    assert_eq!(first, read());
}

#[test]
fn diversity_needs_two_learners() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(TrainMode::SebaysFreeze, dir.path(), 1);
    cli::cmd_train(&cfg).unwrap();
    let err = cli::cmd_diversity(dir.path(), &cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let out = bin().arg("diversity").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn duplicated_snapshot_has_zero_diversity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(TrainMode::SebaysFreeze, dir.path(), 1);
    cli::cmd_train(&cfg).unwrap();
    fs::copy(dir.path().join("learner-1.snap"), dir.path().join("learner-2.snap")).unwrap();
    let row = cli::cmd_diversity(dir.path(), &cfg).unwrap();
    let single = cli::cmd_eval(dir.path(), &cfg).unwrap();
    let learner = single.reports.iter().find(|r| r.model == "learner-1").unwrap();
    assert_eq!((row.d_dis, row.d_kl, row.acc), (0.0, 0.0, learner.acc));
    let csv = fs::read_to_string(dir.path().join("diversity.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("d_dis,d_kl,acc"));
}

#[test]
fn diversity_columns_match_metric_and_ignore_example_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(TrainMode::SebaysNoFreeze, dir.path(), 3);
    cli::cmd_train(&cfg).unwrap();
    let row = cli::cmd_diversity(dir.path(), &cfg).unwrap();

    let snaps = cli::load_snapshots(dir.path()).unwrap();
    let data = cli::prepare_data(&cfg).unwrap();
    let mut x = data.test.features.clone();
    data.normalization.as_ref().unwrap().apply_matrix(&mut x, None).unwrap();
    let preds = cli::learner_predictions(&snaps, &x, cfg.seed, 1, 0).unwrap();
    let refs: Vec<&DenseMatrix> = preds.iter().collect();
    let d = ensemble_diversity(&refs).unwrap();
    assert_eq!((row.d_dis, row.d_kl), (d.d_dis, d.d_kl));
    assert_eq!(row.acc, accuracy(&ensemble_average(&refs).unwrap(), &data.test.labels).unwrap());

    let order: Vec<usize> = (0..x.rows()).rev().collect();
    let permuted: Vec<DenseMatrix> = preds.iter().map(|p| p.select_rows(&order)).collect();
    let d2 = ensemble_diversity(&permuted.iter().collect::<Vec<_>>()).unwrap();
    assert_eq!(d.d_dis, d2.d_dis);
    assert!((d.d_kl - d2.d_kl).abs() <= 1e-12 * d.d_kl.abs().max(1e-300));
}

#[test]
fn m_sweep_rows_are_prefixes_of_one_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(TrainMode::SebaysNoFreeze, &dir.path().join("sweep"), 3);
    let rows = cli::cmd_sweep(&cfg, SweepAxis::M, &["1".into(), "2".into(), "3".into()]).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(dir.path().join("sweep/sweep-M.csv").is_file());

    // a separately trained M=2 run reproduces the first two learners exactly
    let mut two = cfg.clone();
    two.trainer.plan.m = 2;
    two.output_dir = dir.path().join("m2");
    cli::cmd_train(&two).unwrap();
    for f in ["learner-1.snap", "learner-2.snap"] {
        assert_eq!(fs::read(dir.path().join("sweep/M-max").join(f)).unwrap(), fs::read(dir.path().join("m2").join(f)).unwrap());
    }
    let snaps = cli::load_snapshots(&two.output_dir).unwrap();
    let data = cli::prepare_data(&two).unwrap();
    let mut x = data.test.features.clone();
    data.normalization.as_ref().unwrap().apply_matrix(&mut x, None).unwrap();
    let preds = cli::learner_predictions(&snaps, &x, two.seed, 1, 0).unwrap();
    let ens = ensemble_average(&preds.iter().collect::<Vec<_>>()).unwrap();
    assert_eq!(rows[1].ensemble_acc, accuracy(&ens, &data.test.labels).unwrap());
    assert_eq!(rows[1].ensemble_nll, nll(&ens, &data.test.labels).unwrap());
    assert_eq!(rows[0].d_dis, None);
}

#[test]
fn rho_and_schedule_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(TrainMode::SebaysFreeze, dir.path(), 2);
    let rho = cli::cmd_sweep(&cfg, SweepAxis::Rho, &["2".into(), "3".into(), "5".into()]).unwrap();
    assert_eq!(rho.iter().map(|r| r.value.as_str()).collect::<Vec<_>>(), ["2", "3", "5"]);
    for v in ["rho-2", "rho-3", "rho-5"] {
        assert!(dir.path().join(v).join("learner-2.snap").is_file());
    }
    let names: Vec<String> = Schedule::ALL.iter().map(|s| s.to_string()).collect();
    let sched = cli::cmd_sweep(&cfg, SweepAxis::Schedule, &names).unwrap();
    assert_eq!(sched.iter().map(|r| r.value.clone()).collect::<Vec<_>>(), ["stepwise", "cosine", "linear-fge", "linear-1"]);
    let csv = fs::read_to_string(dir.path().join("sweep-schedule.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);

    assert!(matches!(cli::cmd_sweep(&cfg, SweepAxis::Schedule, &["warm".into()]), Err(Error::InvalidArgument(_))));
    assert!("depth".parse::<SweepAxis>().is_err());
    let out = bin().args(["sweep", "x.toml", "--axis", "depth", "--values", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn schedule_dump_matches_lr_at() {
    let out = bin().arg("schedule-dump").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let plan = PhasePlan::default();
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let p = PhasePlan {
            schedule: f[0].parse().unwrap(),
            ..plan
        };
        let epoch: usize = f[1].parse().unwrap();
        assert_eq!(f[2].parse::<f64>().unwrap(), p.lr_at(epoch).unwrap());
        if f[0] == "stepwise" && epoch < 150 {
            assert_eq!(f[2], "1e-1");
        }
        rows += 1;
    }
    assert_eq!(rows, 4 * plan.total_epochs());

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("cos.csv");
    let st = bin().args(["schedule-dump", "--schedule", "cosine", "-o", p.to_str().unwrap()]).status().unwrap();
    assert!(st.success());
    assert_eq!(fs::read_to_string(&p).unwrap().lines().count(), 1 + plan.total_epochs());
}
