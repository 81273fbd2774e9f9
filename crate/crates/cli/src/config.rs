//! Run configuration: defaults, key=value config files, CLI overrides
//! (flags win over the file).

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use dsmil_core::error::{Error, Result};
use dsmil_core::model::{ExtractorKind, TrainMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Csv,
    Bags,
}

impl DataFormat {
    pub fn as_str(&self) -> &'static str {
        match self {
            DataFormat::Csv => "csv",
            DataFormat::Bags => "bags",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(DataFormat::Csv),
            "bags" => Ok(DataFormat::Bags),
            other => Err(Error::Usage(format!(
                "unknown dataset format {other:?} (expected csv|bags)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl OptimizerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(Error::Usage(format!(
                "unknown optimizer {other:?} (expected adam|sgd)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub format: DataFormat,
    pub schema: Option<PathBuf>,
    pub extractor: ExtractorKind,
    pub l: usize,
    pub lambda: f64,
    pub lr: f64,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub mode: TrainMode,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub squash: bool,
    pub label: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            format: DataFormat::Bags,
            schema: None,
            extractor: ExtractorKind::Mlp,
            l: 64,
            lambda: 0.5,
            lr: 1e-4,
            epochs: 40,
            optimizer: OptimizerKind::Adam,
            mode: TrainMode::Joint,
            folds: 10,
            repeats: 5,
            seed: 0,
            out: PathBuf::from("runs"),
            squash: true,
            label: None,
        }
    }
}

impl RunConfig {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad_num =
            |k: &str, v: &str| Error::Usage(format!("config key {k}: bad numeric value {v:?}"));
        match key {
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "format" => self.format = DataFormat::parse(value)?,
            "schema" => self.schema = Some(PathBuf::from(value)),
            "extractor" => self.extractor = ExtractorKind::parse(value)?,
            "l" => self.l = value.parse().map_err(|_| bad_num(key, value))?,
            "lambda" => self.lambda = value.parse().map_err(|_| bad_num(key, value))?,
            "lr" => self.lr = value.parse().map_err(|_| bad_num(key, value))?,
            "epochs" => self.epochs = value.parse().map_err(|_| bad_num(key, value))?,
            "optimizer" => self.optimizer = OptimizerKind::parse(value)?,
            "mode" => self.mode = TrainMode::parse(value)?,
            "folds" => self.folds = value.parse().map_err(|_| bad_num(key, value))?,
            "repeats" => self.repeats = value.parse().map_err(|_| bad_num(key, value))?,
            "seed" => self.seed = value.parse().map_err(|_| bad_num(key, value))?,
            "out" => self.out = PathBuf::from(value),
            "squash" => {
                self.squash = value
                    .parse()
                    .map_err(|_| Error::Usage(format!("config key squash: bad bool {value:?}")))?
            }
            "label" => self.label = Some(value.to_string()),
            other => return Err(Error::Usage(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Loads a `key=value` config file over the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut config = RunConfig::default();
        let text = fs::read_to_string(path)?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Usage(format!(
                    "config line {}: expected key=value, got {line:?}",
                    lineno + 1
                ))
            })?;
            config.set(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Usage(format!(
                "lambda must be in [0,1], got {}",
                self.lambda
            )));
        }
        if self.lr < 0.0 || !self.lr.is_finite() {
            return Err(Error::Usage(format!("learning rate {} invalid", self.lr)));
        }
        if self.l == 0 || self.folds == 0 || self.repeats == 0 {
            return Err(Error::Usage(
                "l, folds and repeats must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn dataset_path(&self) -> Result<&Path> {
        self.dataset
            .as_deref()
            .ok_or_else(|| Error::Usage("no dataset given (flag or config key `dataset`)".into()))
    }

    /// Human-readable identifier used as the report row label.
    pub fn display_label(&self) -> String {
        if let Some(label) = &self.label {
            return label.clone();
        }
        let stem = self
            .dataset
            .as_deref()
            .and_then(|p| p.file_stem())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into());
        format!(
            "{stem}/{}/{}/lambda={}",
            self.extractor.as_str(),
            self.mode.as_str(),
            self.lambda
        )
    }

    pub fn snapshot(&self) -> ConfigSnapshot {
        ConfigSnapshot {
            dataset: self
                .dataset
                .as_deref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            format: self.format.as_str().into(),
            schema: self.schema.as_deref().map(|p| p.display().to_string()),
            extractor: self.extractor.as_str().into(),
            l: self.l,
            lambda: self.lambda,
            lr: self.lr,
            epochs: self.epochs,
            optimizer: self.optimizer.as_str().into(),
            mode: self.mode.as_str().into(),
            folds: self.folds,
            repeats: self.repeats,
            seed: self.seed,
            squash: self.squash,
            label: self.display_label(),
        }
    }
}

/// Serializable copy of the configuration stored inside run records.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct ConfigSnapshot {
    pub dataset: String,
    pub format: String,
    pub schema: Option<String>,
    pub extractor: String,
    pub l: usize,
    pub lambda: f64,
    pub lr: f64,
    pub epochs: usize,
    pub optimizer: String,
    pub mode: String,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub squash: bool,
    pub label: String,
}
