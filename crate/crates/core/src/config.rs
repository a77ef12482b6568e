//! Declarative run configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::CorruptionKind;
use crate::error::{Error, Result};
use crate::layers::{LayerKind, PriorConfig};
use crate::model::NetworkSpec;
use crate::trainer::{TrainMode, TrainerConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    TwoMoons,
    /// Procedurally generated 28×28 digits.
    Digits,
    Idx,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub kind: DataKind,
    /// Generated datasets: sizes. File datasets: optional caps (0 = all).
    pub n_train: usize,
    pub n_test: usize,
    /// Two-moons noise σ.
    pub noise: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_images: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_labels: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_images: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_labels: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_csv: Option<PathBuf>,
    /// Stratified hold-out fraction removed from the training split; 0 keeps
    /// everything.
    pub val_fraction: f64,
    /// Standardize inputs with statistics of the training split.
    pub normalize: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            kind: DataKind::TwoMoons,
            n_train: 1000,
            n_test: 500,
            noise: 0.2,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            train_csv: None,
            test_csv: None,
            val_fraction: 0.0,
            normalize: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OodKind {
    None,
    /// Gaussian blobs in the input plane of a 2-D dataset.
    ShiftedBlobs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Monte-Carlo forward passes per learner; one report per value.
    pub mc: Vec<usize>,
    pub ece_bins: usize,
    pub corruptions: Vec<CorruptionKind>,
    pub severities: Vec<u8>,
    pub ood: OodKind,
    pub ood_n: usize,
    pub ood_centers: Vec<[f64; 2]>,
    pub ood_spread: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            mc: vec![1],
            ece_bins: 15,
            corruptions: Vec::new(),
            severities: vec![1, 2, 3, 4, 5],
            ood: OodKind::None,
            ood_n: 500,
            ood_centers: vec![[0.5, 0.25], [0.25, 0.45], [0.75, 0.05]],
            ood_spread: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    pub network: NetworkSpec,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub trainer: TrainerConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl RunConfig {
    /// Two-moons defaults with a 2-16-16-2 network.
    pub fn two_moons(mode: TrainMode, output_dir: impl Into<PathBuf>) -> Self {
        let hidden = crate::trainer::hidden_kind(mode);
        Self {
            seed: 0,
            output_dir: output_dir.into(),
            network: NetworkSpec::mlp(2, &[16, 16], 2, hidden, LayerKind::Gaussian),
            prior: PriorConfig::default(),
            trainer: TrainerConfig {
                mode,
                ..TrainerConfig::default()
            },
            data: DataConfig::default(),
            eval: EvalConfig::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let key = e.message().split('`').nth(1).unwrap_or("<root>").to_string();
            Error::config(key, e.to_string().trim().replace('\n', " "))
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with_overrides(path, &[])
    }

    /// Loads `path` after applying `key=value` overrides (dotted keys, TOML
    /// values; bare words are taken as strings).
    pub fn load_with_overrides(path: &Path, overrides: &[String]) -> Result<Self> {
        let mut text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if !overrides.is_empty() {
            let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::config("<root>", e.message().to_string()))?;
            for o in overrides {
                apply_override(&mut table, o)?;
            }
            text = table.to_string();
        }
        let mut cfg = Self::parse(&text)?;
        // relative paths resolve against the config file's directory
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        let d = &mut self.data;
        for p in [&mut d.train_images, &mut d.train_labels, &mut d.test_images, &mut d.test_labels, &mut d.train_csv, &mut d.test_csv]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<root>", e.to_string()))
    }

    /// Trainer settings with the run seed applied.
    pub fn trainer_config(&self) -> TrainerConfig {
        TrainerConfig {
            seed: self.seed,
            ..self.trainer.clone()
        }
    }

    /// Checks ranges, cross-field consistency and referenced files.
    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        self.trainer.validate()?;
        self.network.topologies()?;
        self.trainer.check_spec(&self.network)?;
        let d = &self.data;
        let need_file = |key: &str, p: &Option<PathBuf>| -> Result<()> {
            match p {
                None => Err(Error::config(format!("data.{key}"), "required for this data kind")),
                Some(p) if !p.is_file() => Err(Error::config(format!("data.{key}"), format!("file not found: {}", p.display()))),
                Some(_) => Ok(()),
            }
        };
        match d.kind {
            DataKind::TwoMoons | DataKind::Digits => {
                if d.n_train < 2 {
                    return Err(Error::config("data.n_train", "must be at least 2"));
                }
                if d.n_test < 2 {
                    return Err(Error::config("data.n_test", "must be at least 2"));
                }
                if !(d.noise >= 0.0 && d.noise.is_finite()) {
                    return Err(Error::config("data.noise", "must be non-negative"));
                }
            }
            DataKind::Idx => {
                need_file("train_images", &d.train_images)?;
                need_file("train_labels", &d.train_labels)?;
                need_file("test_images", &d.test_images)?;
                need_file("test_labels", &d.test_labels)?;
            }
            DataKind::Csv => {
                need_file("train_csv", &d.train_csv)?;
                need_file("test_csv", &d.test_csv)?;
            }
        }
        if !(d.val_fraction >= 0.0 && d.val_fraction < 1.0) {
            return Err(Error::config("data.val_fraction", "must lie in [0, 1)"));
        }
        let e = &self.eval;
        if e.mc.is_empty() || e.mc.contains(&0) {
            return Err(Error::config("eval.mc", "needs at least one positive value"));
        }
        if e.ece_bins == 0 {
            return Err(Error::config("eval.ece_bins", "must be at least 1"));
        }
        if e.severities.iter().any(|&s| s > 5) {
            return Err(Error::config("eval.severities", "levels lie in 0..=5"));
        }
        if e.ood == OodKind::ShiftedBlobs {
            if self.network.input_len() != 2 {
                return Err(Error::config("eval.ood", "shifted-blobs needs 2-D inputs"));
            }
            if e.ood_centers.is_empty() || e.ood_n < e.ood_centers.len() {
                return Err(Error::config("eval.ood_n", "needs at least one point per centre"));
            }
        }
        if self.trainer.augment && self.network.input.len() != 3 && d.kind == DataKind::TwoMoons {
            return Err(Error::config("trainer.augment", "augmentation needs image data"));
        }
        Ok(())
    }
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::InvalidArgument(format!("override `{item}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in parents {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::config(key, format!("`{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
