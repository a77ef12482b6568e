//! Operator commands over a [`RunConfig`]: train, eval, diversity, sweep
//! and schedule-dump. Each writes plain CSV/JSON artifacts into a run
//! directory and is safe to rerun (identical inputs rewrite identical
//! bytes).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{DataKind, OodKind, RunConfig};
use crate::data::{
    corrupt, gaussian_blobs_at, load_csv, load_idx_images, procedural_digits, split_train_val, two_moons, CorruptionSpec, Dataset,
    Normalization, Split,
};
use crate::error::{Error, Result};
use crate::metrics::{
    auroc_ood, check_jensen, ensemble_average, ensemble_diversity, ensemble_size_sweep, reports_csv, JensenCheck, MetricsReport, SweepRow,
};
use crate::model::{Network, NoiseStreams};
use crate::numeric::{streams, DenseMatrix, RngStream};
use crate::schedule::{schedule_csv, PhasePlan, Schedule};
use crate::snapshot::{self, Snapshot};
use crate::trainer::{train, Checkpoint, EpochLog, TrainInputs, TrainObserver, TrainRun, EPOCH_LOG_HEADER};

pub const CONFIG_FILE: &str = "config.toml";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const SPARSITY_LOG: &str = "sparsity.csv";
pub const TRAJECTORY: &str = "trajectory.csv";
pub const NORMALIZATION: &str = "normalization.json";
pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const DIVERSITY_CSV: &str = "diversity.csv";

pub fn snapshot_file(learner: usize) -> String {
    format!("learner-{learner}.snap")
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Raw splits of a run's data source. Normalization statistics come from
/// the training split only.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub train: Dataset,
    pub val: Option<Dataset>,
    pub test: Dataset,
    pub normalization: Option<Normalization>,
}

fn cap(ds: Dataset, n: usize) -> Dataset {
    if n == 0 || n >= ds.len() {
        ds
    } else {
        ds.subset(&(0..n).collect::<Vec<_>>())
    }
}

pub fn prepare_data(cfg: &RunConfig) -> Result<PreparedData> {
    let d = &cfg.data;
    let gen = |k: u64| RngStream::new(cfg.seed, streams::derive(streams::DATA_GEN, k, 0));
    let need = |p: &Option<PathBuf>, key: &str| p.clone().ok_or_else(|| Error::config(format!("data.{key}"), "required for this data kind"));
    let (train, test) = match d.kind {
        DataKind::TwoMoons => (two_moons(d.n_train, d.noise, &mut gen(0))?, two_moons(d.n_test, d.noise, &mut gen(1))?),
        DataKind::Digits => (procedural_digits(d.n_train, &mut gen(0))?, procedural_digits(d.n_test, &mut gen(1))?),
        DataKind::Idx => (
            cap(load_idx_images(&need(&d.train_images, "train_images")?, &need(&d.train_labels, "train_labels")?)?, d.n_train),
            cap(load_idx_images(&need(&d.test_images, "test_images")?, &need(&d.test_labels, "test_labels")?)?, d.n_test),
        ),
        DataKind::Csv => (load_csv(&need(&d.train_csv, "train_csv")?)?, load_csv(&need(&d.test_csv, "test_csv")?)?),
    };
    let classes = cfg.network.classes;
    if train.classes > classes || test.classes > classes {
        return Err(Error::config("network.classes", format!("data has {} classes", train.classes.max(test.classes))));
    }
    let relabel = |mut ds: Dataset, split| {
        ds.classes = classes;
        ds.with_split(split)
    };
    let (train, test) = (relabel(train, Split::Train), relabel(test, Split::Test));
    if train.dim() != cfg.network.input_len() {
        return Err(Error::config("network.input", format!("data has {} features", train.dim())));
    }
    let (train, val) = if d.val_fraction > 0.0 {
        let (t, v) = split_train_val(&train, d.val_fraction, &mut RngStream::new(cfg.seed, streams::SPLIT))?;
        (t, Some(v))
    } else {
        (train, None)
    };
    let normalization = if d.normalize { Some(Normalization::fit(&train)?) } else { None };
    Ok(PreparedData {
        train,
        val,
        test,
        normalization,
    })
}

fn normalized_features(ds: &Dataset, norm: &Option<Normalization>) -> Result<DenseMatrix> {
    let mut x = ds.features.clone();
    if let Some(n) = norm {
        n.apply_matrix(&mut x, ds.image)?;
    }
    Ok(x)
}

struct RunWriter<'a> {
    dir: &'a Path,
    log: String,
    sparsity: String,
    trajectory: String,
    classes: usize,
}

impl TrainObserver for RunWriter<'_> {
    fn on_epoch_end(&mut self, net: &Network, log: &EpochLog) -> Result<()> {
        let _ = writeln!(self.log, "{}", log.csv_row());
        let pruned = crate::sparsity::sparsity_report(net, 0.5).pruned_units();
        let _ = writeln!(
            self.sparsity,
            "{},{:e},{:e},{}",
            log.epoch, log.remaining_param_ratio, log.remaining_flop_ratio, pruned
        );
        Ok(())
    }

    fn on_snapshot(&mut self, snap: &Snapshot) -> Result<()> {
        snapshot::save(&self.dir.join(snapshot_file(snap.header.learner)), snap)
    }

    fn on_checkpoint(&mut self, cp: &Checkpoint) -> Result<()> {
        for (i, row) in cp.probs.iter_rows().enumerate() {
            let _ = write!(self.trajectory, "{},{},{}", cp.id, cp.epoch, i);
            for p in row {
                let _ = write!(self.trajectory, ",{p:e}");
            }
            self.trajectory.push('\n');
        }
        Ok(())
    }
}

/// Trains the sequential ensemble and writes snapshots, the training log,
/// the sparsity curve, prediction checkpoints, normalization statistics
/// and a copy of the resolved config into `cfg.output_dir`.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainRun> {
    cfg.validate()?;
    let data = prepare_data(cfg)?;
    let dir = cfg.output_dir.as_path();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x == "snap") {
            fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
        }
    }
    write(&dir.join(CONFIG_FILE), cfg.to_toml()?)?;
    let norm_json = serde_json::to_string_pretty(&data.normalization).map_err(|e| Error::Malformed(e.to_string()))?;
    write(&dir.join(NORMALIZATION), norm_json)?;

    let tcfg = cfg.trainer_config();
    let mut header = String::from("checkpoint_id,epoch,example_id");
    for c in 0..cfg.network.classes {
        let _ = write!(header, ",p{c}");
    }
    let mut w = RunWriter {
        dir,
        log: format!("{EPOCH_LOG_HEADER}\n"),
        sparsity: "epoch,remaining_param_ratio,remaining_flop_ratio,pruned_units\n".into(),
        trajectory: header + "\n",
        classes: cfg.network.classes,
    };
    debug_assert!(w.classes > 0);
    let result = train(
        &tcfg,
        TrainInputs {
            spec: cfg.network.clone(),
            prior: cfg.prior,
            train: &data.train,
            normalization: data.normalization.clone(),
            trajectory_inputs: Some(&data.test.features),
        },
        &mut w,
    );
    // logs are written even when training aborts
    write(&dir.join(TRAIN_LOG), &w.log)?;
    write(&dir.join(SPARSITY_LOG), &w.sparsity)?;
    if tcfg.trajectory_every > 0 {
        write(&dir.join(TRAJECTORY), &w.trajectory)?;
    }
    result
}

/// Loads `learner-1.snap`, `learner-2.snap`, ... until the first gap.
pub fn load_snapshots(run_dir: &Path) -> Result<Vec<Snapshot>> {
    let mut out = Vec::new();
    loop {
        let p = run_dir.join(snapshot_file(out.len() + 1));
        if !p.exists() {
            break;
        }
        out.push(snapshot::load(&p)?);
    }
    if out.is_empty() {
        return Err(Error::Snapshot(format!("no snapshots in {}", run_dir.display())));
    }
    Ok(out)
}

pub fn load_run_config(run_dir: &Path) -> Result<RunConfig> {
    let p = run_dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    RunConfig::parse(&text)
}

/// One stochastic evaluation per learner (averaged over `mc` passes).
/// Learner `m` uses evaluation streams keyed by `(m, variant)`.
pub fn learner_predictions(snaps: &[Snapshot], x: &DenseMatrix, seed: u64, mc: usize, variant: u64) -> Result<Vec<DenseMatrix>> {
    snaps
        .iter()
        .map(|s| {
            let mut net = s.network.clone();
            let mut rng = NoiseStreams::for_eval(seed, (s.header.learner as u64) << 16 | variant);
            net.predict_mc(x, &mut rng, mc)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub reports: Vec<MetricsReport>,
    pub jensen: Vec<JensenRecord>,
    pub sweep: Vec<SweepRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JensenRecord {
    pub mc: usize,
    /// `clean` or `<kind>.<severity>`.
    pub split: String,
    pub check: JensenCheck,
}

fn ood_inputs(cfg: &RunConfig, norm: &Option<Normalization>) -> Result<Option<DenseMatrix>> {
    if cfg.eval.ood != OodKind::ShiftedBlobs {
        return Ok(None);
    }
    let mut rng = RngStream::new(cfg.seed, streams::derive(streams::DATA_GEN, 2, 0));
    let ood = gaussian_blobs_at(cfg.eval.ood_n, &cfg.eval.ood_centers, cfg.eval.ood_spread, &mut rng)?;
    Ok(Some(normalized_features(&ood, norm)?))
}

/// Per-learner and ensemble metrics on the clean test set, on every
/// configured corruption and (if configured) against OoD inputs, for each
/// MC setting. Writes `metrics.json` and `metrics.csv`.
pub fn cmd_eval(run_dir: &Path, cfg: &RunConfig) -> Result<EvalOutput> {
    cfg.validate()?;
    let snaps = load_snapshots(run_dir)?;
    let data = prepare_data(cfg)?;
    let norm = snaps[0].header.normalization.clone();
    let labels = &data.test.labels;
    let bins = cfg.eval.ece_bins;
    let x = normalized_features(&data.test, &norm)?;
    let ood = ood_inputs(cfg, &norm)?;

    let mut out = EvalOutput {
        reports: Vec::new(),
        jensen: Vec::new(),
        sweep: Vec::new(),
    };
    for &mc in &cfg.eval.mc {
        let preds = learner_predictions(&snaps, &x, cfg.seed, mc, 0)?;
        let refs: Vec<&DenseMatrix> = preds.iter().collect();
        let ens = ensemble_average(&refs)?;
        out.jensen.push(JensenRecord {
            mc,
            split: "clean".into(),
            check: check_jensen(&refs, labels)?,
        });
        if mc == cfg.eval.mc[0] {
            out.sweep = ensemble_size_sweep(&refs, labels)?;
        }
        let mut reports: Vec<MetricsReport> = preds
            .iter()
            .zip(&snaps)
            .map(|(p, s)| MetricsReport::clean(format!("learner-{}", s.header.learner), mc, p, labels, bins))
            .collect::<Result<_>>()?;
        let mut er = MetricsReport::clean("ensemble", mc, &ens, labels, bins)?;
        if refs.len() >= 2 {
            let d = ensemble_diversity(&refs)?;
            er.d_dis = Some(d.d_dis);
            er.d_kl = Some(d.d_kl);
        }

        for (ci, &kind) in cfg.eval.corruptions.iter().enumerate() {
            for &severity in &cfg.eval.severities {
                let c = corrupt(&data.test, CorruptionSpec { kind, severity }, cfg.seed)?;
                let cx = normalized_features(&c, &norm)?;
                let variant = 1 + (ci as u64) * 8 + severity as u64;
                let cp = learner_predictions(&snaps, &cx, cfg.seed, mc, variant)?;
                let crefs: Vec<&DenseMatrix> = cp.iter().collect();
                let cens = ensemble_average(&crefs)?;
                out.jensen.push(JensenRecord {
                    mc,
                    split: format!("{kind}.{severity}"),
                    check: check_jensen(&crefs, labels)?,
                });
                for (r, p) in reports.iter_mut().zip(&cp) {
                    r.add_corruption(kind.name(), severity, p, labels, bins)?;
                }
                er.add_corruption(kind.name(), severity, &cens, labels, bins)?;
            }
        }

        if let Some(ox) = &ood {
            let op = learner_predictions(&snaps, ox, cfg.seed, mc, 0xffff)?;
            for (r, (p, o)) in reports.iter_mut().zip(preds.iter().zip(&op)) {
                r.auroc = Some(auroc_ood(p, o)?);
            }
            let orefs: Vec<&DenseMatrix> = op.iter().collect();
            er.auroc = Some(auroc_ood(&ens, &ensemble_average(&orefs)?)?);
        }
        out.reports.extend(reports);
        out.reports.push(er);
    }

    let json = serde_json::to_string_pretty(&out).map_err(|e| Error::Malformed(e.to_string()))?;
    write(&run_dir.join(METRICS_JSON), json)?;
    // corruption columns differ between learner and ensemble rows only if
    // the configuration changed mid-run, which cannot happen here
    write(&run_dir.join(METRICS_CSV), reports_csv(&out.reports)?)?;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityRow {
    pub d_dis: f64,
    pub d_kl: f64,
    pub acc: f64,
}

/// `d_dis, d_KL` over the run's learners plus ensemble accuracy, written to
/// `diversity.csv`.
pub fn cmd_diversity(run_dir: &Path, cfg: &RunConfig) -> Result<DiversityRow> {
    let snaps = load_snapshots(run_dir)?;
    if snaps.len() < 2 {
        return Err(Error::InvalidArgument(format!("diversity needs at least 2 snapshots, found {}", snaps.len())));
    }
    let data = prepare_data(cfg)?;
    let x = normalized_features(&data.test, &snaps[0].header.normalization)?;
    let preds = learner_predictions(&snaps, &x, cfg.seed, 1, 0)?;
    let refs: Vec<&DenseMatrix> = preds.iter().collect();
    let d = ensemble_diversity(&refs)?;
    let row = DiversityRow {
        d_dis: d.d_dis,
        d_kl: d.d_kl,
        acc: crate::metrics::accuracy(&ensemble_average(&refs)?, &data.test.labels)?,
    };
    write(&run_dir.join(DIVERSITY_CSV), format!("d_dis,d_kl,acc\n{:e},{:e},{:e}\n", row.d_dis, row.d_kl, row.acc))?;
    Ok(row)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    M,
    Rho,
    Schedule,
    Mc,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "M" | "m" => Ok(SweepAxis::M),
            "rho" => Ok(SweepAxis::Rho),
            "schedule" => Ok(SweepAxis::Schedule),
            "mc" => Ok(SweepAxis::Mc),
            _ => Err(Error::InvalidArgument(format!("unknown sweep axis `{s}` (expected M, rho, schedule or mc)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub value: String,
    pub ensemble_acc: f64,
    pub ensemble_nll: f64,
    pub ensemble_ece: f64,
    pub individual_acc_mean: f64,
    pub d_dis: Option<f64>,
    pub d_kl: Option<f64>,
}

pub const SWEEP_HEADER: &str = "axis,value,ensemble_acc,ensemble_nll,ensemble_ece,individual_acc_mean,d_dis,d_kl";

impl SweepResult {
    fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
        let axis = match self.axis {
            SweepAxis::M => "M",
            SweepAxis::Rho => "rho",
            SweepAxis::Schedule => "schedule",
            SweepAxis::Mc => "mc",
        };
        format!(
            "{axis},{},{:e},{:e},{:e},{:e},{},{}",
            self.value,
            self.ensemble_acc,
            self.ensemble_nll,
            self.ensemble_ece,
            self.individual_acc_mean,
            opt(self.d_dis),
            opt(self.d_kl)
        )
    }
}

fn summarize(axis: SweepAxis, value: String, preds: &[&DenseMatrix], labels: &[usize], bins: usize) -> Result<SweepResult> {
    let ens = ensemble_average(preds)?;
    let accs = preds.iter().map(|p| crate::metrics::accuracy(p, labels)).collect::<Result<Vec<_>>>()?;
    let div = if preds.len() >= 2 { Some(ensemble_diversity(preds)?) } else { None };
    Ok(SweepResult {
        axis,
        value,
        ensemble_acc: crate::metrics::accuracy(&ens, labels)?,
        ensemble_nll: crate::metrics::nll(&ens, labels)?,
        ensemble_ece: crate::metrics::ece(&ens, labels, bins)?,
        individual_acc_mean: accs.iter().sum::<f64>() / accs.len() as f64,
        d_dis: div.map(|d| d.d_dis),
        d_kl: div.map(|d| d.d_kl),
    })
}

/// Runs the configuration once per value along `axis` (each in its own
/// subdirectory of `cfg.output_dir`) and writes `sweep-<axis>.csv`.
///
/// The `M` axis trains a single run with the largest `M` and scores its
/// prefixes; `mc` reuses one run as well.
pub fn cmd_sweep(cfg: &RunConfig, axis: SweepAxis, values: &[String]) -> Result<Vec<SweepResult>> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one value".into()));
    }
    let parse_usize = |v: &String| v.parse::<usize>().map_err(|_| Error::InvalidArgument(format!("invalid {axis:?} value `{v}`")));
    let base_dir = cfg.output_dir.clone();
    let bins = cfg.eval.ece_bins;
    let mut rows = Vec::new();

    let eval_run = |run_cfg: &RunConfig, mc: usize| -> Result<(Vec<DenseMatrix>, Vec<usize>)> {
        let snaps = load_snapshots(&run_cfg.output_dir)?;
        let data = prepare_data(run_cfg)?;
        let x = normalized_features(&data.test, &snaps[0].header.normalization)?;
        Ok((learner_predictions(&snaps, &x, run_cfg.seed, mc, 0)?, data.test.labels))
    };

    match axis {
        SweepAxis::M | SweepAxis::Mc => {
            let ms: Vec<usize> = values.iter().map(parse_usize).collect::<Result<_>>()?;
            if ms.contains(&0) {
                return Err(Error::InvalidArgument(format!("{axis:?} values must be positive")));
            }
            let mut run_cfg = cfg.clone();
            run_cfg.output_dir = base_dir.join(if axis == SweepAxis::M { "M-max" } else { "mc" });
            if axis == SweepAxis::M {
                run_cfg.trainer.plan.m = *ms.iter().max().expect("non-empty");
            }
            cmd_train(&run_cfg)?;
            if axis == SweepAxis::M {
                let (preds, labels) = eval_run(&run_cfg, cfg.eval.mc[0])?;
                for (v, &m) in values.iter().zip(&ms) {
                    let refs: Vec<&DenseMatrix> = preds[..m].iter().collect();
                    rows.push(summarize(axis, v.clone(), &refs, &labels, bins)?);
                }
            } else {
                for (v, &mc) in values.iter().zip(&ms) {
                    let (preds, labels) = eval_run(&run_cfg, mc)?;
                    let refs: Vec<&DenseMatrix> = preds.iter().collect();
                    rows.push(summarize(axis, v.clone(), &refs, &labels, bins)?);
                }
            }
        }
        SweepAxis::Rho | SweepAxis::Schedule => {
            for v in values {
                let mut run_cfg = cfg.clone();
                run_cfg.output_dir = base_dir.join(format!("{}-{v}", if axis == SweepAxis::Rho { "rho" } else { "schedule" }));
                if axis == SweepAxis::Rho {
                    run_cfg.trainer.rho = v.parse().map_err(|_| Error::InvalidArgument(format!("invalid rho value `{v}`")))?;
                } else {
                    run_cfg.trainer.plan.schedule = v.parse::<Schedule>()?;
                }
                cmd_train(&run_cfg)?;
                let (preds, labels) = eval_run(&run_cfg, cfg.eval.mc[0])?;
                let refs: Vec<&DenseMatrix> = preds.iter().collect();
                rows.push(summarize(axis, v.clone(), &refs, &labels, bins)?);
            }
        }
    }
    fs::create_dir_all(&base_dir).map_err(|e| Error::io(&base_dir, e))?;
    let name = match axis {
        SweepAxis::M => "sweep-M.csv",
        SweepAxis::Rho => "sweep-rho.csv",
        SweepAxis::Schedule => "sweep-schedule.csv",
        SweepAxis::Mc => "sweep-mc.csv",
    };
    let mut csv = format!("{SWEEP_HEADER}\n");
    for r in &rows {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    write(&base_dir.join(name), csv)?;
    Ok(rows)
}

/// `schedule,epoch,lr` for every schedule (or one).
pub fn cmd_schedule_dump(plan: &PhasePlan, only: Option<Schedule>, out: Option<&Path>) -> Result<String> {
    plan.validate()?;
    let csv = schedule_csv(plan, only)?;
    if let Some(p) = out {
        write(p, &csv)?;
    }
    Ok(csv)
}
