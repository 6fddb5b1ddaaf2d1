//! Experiment configuration and its flat `section.key = value` text form.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::NormalizeMode;
use crate::error::{Error, Result};
use crate::nn::{Activation, DEFAULT_MOMENTUM, DEFAULT_WEIGHT_DECAY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DataSource {
    Synthetic {
        class_count: usize,
        input_dim: usize,
        per_class: usize,
        separation: f64,
        std: f64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        /// Rebalance to this many samples per class when set.
        per_class_n: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub model: u64,
    pub data: u64,
    pub subsample: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CheckpointSchedule {
    /// `{0, 1, 2, 4, 8, …, epochs}`
    LogSpaced,
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub depth: usize,
    pub width: usize,
    pub activation: Activation,
    pub data: DataSource,
    pub normalize: Option<NormalizeMode>,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub max_lr: f64,
    pub warmup_fraction: f64,
    pub start_div: f64,
    pub final_div: f64,
    pub checkpoints: CheckpointSchedule,
    pub coord_cap: usize,
    /// Pseudoinverse cutoff; `None` means `dim · ε`.
    pub rel_tol: Option<f64>,
    pub seeds: Seeds,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            depth: 6,
            width: 64,
            activation: Activation::Relu,
            data: DataSource::Synthetic {
                class_count: 4,
                input_dim: 32,
                per_class: 500,
                separation: 4.0,
                std: 1.0,
            },
            normalize: Some(NormalizeMode::PerDimension),
            epochs: 100,
            batch_size: 128,
            momentum: DEFAULT_MOMENTUM,
            weight_decay: DEFAULT_WEIGHT_DECAY,
            max_lr: 0.05,
            warmup_fraction: 0.3,
            start_div: 25.0,
            final_div: 1e4,
            checkpoints: CheckpointSchedule::LogSpaced,
            coord_cap: 2048,
            rel_tol: None,
            seeds: Seeds {
                model: 0,
                data: 0,
                subsample: 0,
            },
        }
    }
}

pub fn log_spaced_epochs(epochs: usize) -> Vec<usize> {
    let mut out = vec![0];
    let mut e = 1;
    while e < epochs {
        out.push(e);
        e *= 2;
    }
    if epochs > 0 {
        out.push(epochs);
    }
    out
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.width == 0 {
            return Err(Error::InvalidConfig("depth and width must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.coord_cap == 0 {
            return Err(Error::InvalidConfig("coord_cap must be >= 1".into()));
        }
        if let Some(t) = self.rel_tol {
            if !(t > 0.0) {
                return Err(Error::InvalidConfig(format!("rel_tol must be > 0, got {t}")));
            }
        }
        if !(self.momentum >= 0.0 && self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("momentum and weight_decay must be >= 0".into()));
        }
        if let CheckpointSchedule::Explicit(list) = &self.checkpoints {
            if list.first() != Some(&0) {
                return Err(Error::InvalidConfig("checkpoint list must start at epoch 0".into()));
            }
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidConfig("checkpoint epochs must be strictly increasing".into()));
            }
            if list.last().is_some_and(|&e| e > self.epochs) {
                return Err(Error::InvalidConfig(format!(
                    "checkpoint epoch beyond the {} training epochs",
                    self.epochs
                )));
            }
        }
        Ok(())
    }

    pub fn checkpoint_epochs(&self) -> Vec<usize> {
        match &self.checkpoints {
            CheckpointSchedule::LogSpaced => log_spaced_epochs(self.epochs),
            CheckpointSchedule::Explicit(list) => list.clone(),
        }
    }

    /// Canonical text form; parsing it back yields an identical config.
    pub fn to_text(&self) -> String {
        let mut kv: Vec<(&str, String)> = vec![
            ("model.depth", self.depth.to_string()),
            ("model.width", self.width.to_string()),
            ("model.activation", self.activation.name().to_string()),
        ];
        if let Activation::LeakyRelu { slope } = self.activation {
            kv.push(("model.leaky_slope", slope.to_string()));
        }
        match &self.data {
            DataSource::Synthetic {
                class_count,
                input_dim,
                per_class,
                separation,
                std,
            } => {
                kv.push(("data.source", "synthetic".into()));
                kv.push(("data.classes", class_count.to_string()));
                kv.push(("data.dim", input_dim.to_string()));
                kv.push(("data.per_class", per_class.to_string()));
                kv.push(("data.separation", separation.to_string()));
                kv.push(("data.std", std.to_string()));
            }
            DataSource::Idx {
                images,
                labels,
                per_class_n,
            } => {
                kv.push(("data.source", "idx".into()));
                kv.push(("data.images", images.display().to_string()));
                kv.push(("data.labels", labels.display().to_string()));
                if let Some(n) = per_class_n {
                    kv.push(("data.per_class_n", n.to_string()));
                }
            }
        }
        kv.push((
            "data.normalize",
            match self.normalize {
                None => "none",
                Some(NormalizeMode::PerDimension) => "per_dimension",
                Some(NormalizeMode::Global) => "global",
            }
            .into(),
        ));
        kv.push(("train.epochs", self.epochs.to_string()));
        kv.push(("train.batch_size", self.batch_size.to_string()));
        kv.push(("train.momentum", self.momentum.to_string()));
        kv.push(("train.weight_decay", self.weight_decay.to_string()));
        kv.push(("schedule.max_lr", self.max_lr.to_string()));
        kv.push(("schedule.warmup_fraction", self.warmup_fraction.to_string()));
        kv.push(("schedule.start_div", self.start_div.to_string()));
        kv.push(("schedule.final_div", self.final_div.to_string()));
        kv.push((
            "analysis.checkpoints",
            match &self.checkpoints {
                CheckpointSchedule::LogSpaced => "log".into(),
                CheckpointSchedule::Explicit(list) => list
                    .iter()
                    .map(|e| e.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            },
        ));
        kv.push(("analysis.coord_cap", self.coord_cap.to_string()));
        kv.push((
            "analysis.rel_tol",
            self.rel_tol.map_or_else(|| "auto".into(), |t| t.to_string()),
        ));
        kv.push(("seed.model", self.seeds.model.to_string()));
        kv.push(("seed.data", self.seeds.data.to_string()));
        kv.push(("seed.subsample", self.seeds.subsample.to_string()));

        let mut out = String::new();
        for (k, v) in kv {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// SHA-256 of the canonical text form.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_entries(parse_entries(text)?)
    }

    /// Builds a config from defaults overlaid with `section.key` entries.
    pub fn from_entries(mut kv: BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut take = |key: &str| kv.remove(key);

        if let Some(v) = take("model.depth") {
            cfg.depth = parse_num(v, "model.depth")?;
        }
        if let Some(v) = take("model.width") {
            cfg.width = parse_num(v, "model.width")?;
        }
        if let Some(v) = take("model.activation") {
            cfg.activation = v.parse()?;
        }
        if let Some(v) = take("model.leaky_slope") {
            let slope: f64 = parse_num(v, "model.leaky_slope")?;
            match cfg.activation {
                Activation::LeakyRelu { .. } => cfg.activation = Activation::LeakyRelu { slope },
                _ => {
                    return Err(Error::InvalidConfig(
                        "model.leaky_slope set for a non-leaky activation".into(),
                    ))
                }
            }
        }

        let source = take("data.source").unwrap_or_else(|| "synthetic".into());
        cfg.data = match source.as_str() {
            "synthetic" => {
                let DataSource::Synthetic {
                    mut class_count,
                    mut input_dim,
                    mut per_class,
                    mut separation,
                    mut std,
                } = cfg.data
                else {
                    unreachable!("default data source is synthetic")
                };
                if let Some(v) = take("data.classes") {
                    class_count = parse_num(v, "data.classes")?;
                }
                if let Some(v) = take("data.dim") {
                    input_dim = parse_num(v, "data.dim")?;
                }
                if let Some(v) = take("data.per_class") {
                    per_class = parse_num(v, "data.per_class")?;
                }
                if let Some(v) = take("data.separation") {
                    separation = parse_num(v, "data.separation")?;
                }
                if let Some(v) = take("data.std") {
                    std = parse_num(v, "data.std")?;
                }
                DataSource::Synthetic {
                    class_count,
                    input_dim,
                    per_class,
                    separation,
                    std,
                }
            }
            "idx" => {
                let images = take("data.images")
                    .ok_or_else(|| Error::InvalidConfig("data.images is required for idx data".into()))?;
                let labels = take("data.labels")
                    .ok_or_else(|| Error::InvalidConfig("data.labels is required for idx data".into()))?;
                let per_class_n = take("data.per_class_n")
                    .map(|v| parse_num(v, "data.per_class_n"))
                    .transpose()?;
                DataSource::Idx {
                    images: images.into(),
                    labels: labels.into(),
                    per_class_n,
                }
            }
            other => {
                return Err(Error::InvalidConfig(format!("unknown data.source {other:?}")));
            }
        };
        if let Some(v) = take("data.normalize") {
            cfg.normalize = match v.as_str() {
                "none" => None,
                "per_dimension" => Some(NormalizeMode::PerDimension),
                "global" => Some(NormalizeMode::Global),
                other => {
                    return Err(Error::InvalidConfig(format!("unknown data.normalize {other:?}")))
                }
            };
        }

        if let Some(v) = take("train.epochs") {
            cfg.epochs = parse_num(v, "train.epochs")?;
        }
        if let Some(v) = take("train.batch_size") {
            cfg.batch_size = parse_num(v, "train.batch_size")?;
        }
        if let Some(v) = take("train.momentum") {
            cfg.momentum = parse_num(v, "train.momentum")?;
        }
        if let Some(v) = take("train.weight_decay") {
            cfg.weight_decay = parse_num(v, "train.weight_decay")?;
        }
        if let Some(v) = take("schedule.max_lr") {
            cfg.max_lr = parse_num(v, "schedule.max_lr")?;
        }
        if let Some(v) = take("schedule.warmup_fraction") {
            cfg.warmup_fraction = parse_num(v, "schedule.warmup_fraction")?;
        }
        if let Some(v) = take("schedule.start_div") {
            cfg.start_div = parse_num(v, "schedule.start_div")?;
        }
        if let Some(v) = take("schedule.final_div") {
            cfg.final_div = parse_num(v, "schedule.final_div")?;
        }
        if let Some(v) = take("analysis.checkpoints") {
            cfg.checkpoints = if v == "log" {
                CheckpointSchedule::LogSpaced
            } else {
                CheckpointSchedule::Explicit(
                    v.split(',')
                        .map(|s| parse_num(s.trim().to_string(), "analysis.checkpoints"))
                        .collect::<Result<_>>()?,
                )
            };
        }
        if let Some(v) = take("analysis.coord_cap") {
            cfg.coord_cap = parse_num(v, "analysis.coord_cap")?;
        }
        if let Some(v) = take("analysis.rel_tol") {
            cfg.rel_tol = if v == "auto" {
                None
            } else {
                Some(parse_num(v, "analysis.rel_tol")?)
            };
        }
        if let Some(v) = take("seed.model") {
            cfg.seeds.model = parse_num(v, "seed.model")?;
        }
        if let Some(v) = take("seed.data") {
            cfg.seeds.data = parse_num(v, "seed.data")?;
        }
        if let Some(v) = take("seed.subsample") {
            cfg.seeds.subsample = parse_num(v, "seed.subsample")?;
        }

        if let Some(unknown) = kv.keys().next() {
            return Err(Error::InvalidConfig(format!("unknown or inapplicable key {unknown:?}")));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_num<T: std::str::FromStr>(v: String, key: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {v:?}")))
}

/// Splits `section.key = value` lines. `#` starts a comment; blank lines are
/// skipped; a repeated key is an error.
pub fn parse_entries(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("line {}: expected `section.key = value`", lineno + 1))
        })?;
        let key = key.trim();
        if !key.contains('.') || key.starts_with('.') || key.ends_with('.') {
            return Err(Error::InvalidConfig(format!(
                "line {}: key {key:?} is not of the form section.key",
                lineno + 1
            )));
        }
        if out.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(Error::InvalidConfig(format!("line {}: duplicate key {key:?}", lineno + 1)));
        }
    }
    Ok(out)
}
