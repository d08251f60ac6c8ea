//! Flat `key = value` run configuration, named presets and resolution order
//! (defaults, then preset, then config file, then command-line flags).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use talu_core::activations::ActivationKind;
use talu_core::datasets::DatasetName;
use talu_core::layers::BatchNormConfig;
use talu_core::models::{Architecture, ModelConfig};
use talu_core::training::TrainConfig;
use talu_core::{Activation, Precision};

use crate::CliError;

pub const KEYS: [&str; 19] = [
    "name",
    "arch",
    "dataset",
    "activation",
    "leaky_slope",
    "lr",
    "bn",
    "bn_momentum",
    "epochs",
    "batch_size",
    "momentum",
    "seed",
    "subset",
    "test_subset",
    "data_dir",
    "out",
    "precision",
    "deterministic",
    "divergence_loss_cap",
];

pub const PRESETS: [&str; 5] = ["mnist-desk", "cifar-desk", "paper", "paper-curves", "smoke"];

/// Every setting of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Empty means derived from the other settings, see [`RunConfig::run_name`].
    pub name: String,
    pub arch: Architecture,
    pub dataset: DatasetName,
    pub activation: ActivationKind,
    /// Fixed slope of LeakyReLU and initial slope of PReLU.
    pub leaky_slope: f64,
    pub lr: f64,
    pub bn: bool,
    /// Weight of the old value in the BatchNorm running averages.
    pub bn_momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub seed: u64,
    /// Training images per class; 0 keeps the full split.
    pub subset: usize,
    /// Test images per class; 0 keeps the full split.
    pub test_subset: usize,
    /// Empty means `data/<dataset>`.
    pub data_dir: PathBuf,
    pub out: PathBuf,
    pub precision: Precision,
    pub deterministic: bool,
    pub divergence_loss_cap: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        RunConfig {
            name: String::new(),
            arch: Architecture::Simple,
            dataset: DatasetName::Mnist,
            activation: ActivationKind::Talu,
            leaky_slope: talu_core::activations::DEFAULT_LEAKY_SLOPE,
            lr: train.learning_rate,
            bn: true,
            bn_momentum: BatchNormConfig::default().momentum,
            epochs: train.epochs,
            batch_size: train.batch_size,
            momentum: train.momentum,
            seed: 0,
            subset: 0,
            test_subset: 0,
            data_dir: PathBuf::new(),
            out: PathBuf::from("runs"),
            precision: Precision::F64,
            deterministic: true,
            divergence_loss_cap: train.divergence_loss_cap,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| usage(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(usage(format!("invalid value {value:?} for {key} (expected true or false)"))),
    }
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self, CliError> {
        let base = RunConfig::default();
        let cfg = match name {
            "mnist-desk" => RunConfig {
                dataset: DatasetName::Mnist,
                subset: 600,
                lr: 0.01,
                bn: true,
                // a few dozen steps per epoch are too few for 0.99 averages
                bn_momentum: 0.9,
                epochs: 5,
                batch_size: 128,
                precision: Precision::F32,
                ..base
            },
            "cifar-desk" => RunConfig {
                dataset: DatasetName::Cifar10,
                subset: 500,
                lr: 0.01,
                bn: true,
                bn_momentum: 0.9,
                epochs: 10,
                batch_size: 128,
                precision: Precision::F32,
                ..base
            },
            "paper" => RunConfig {
                epochs: 25,
                batch_size: 512,
                ..base
            },
            "paper-curves" => RunConfig {
                epochs: 50,
                batch_size: 512,
                lr: 0.001,
                ..base
            },
            "smoke" => RunConfig {
                dataset: DatasetName::Mnist,
                subset: 20,
                test_subset: 20,
                epochs: 2,
                batch_size: 32,
                ..base
            },
            other => {
                return Err(usage(format!(
                    "unknown preset {other:?}; valid presets: {}",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        match key {
            "name" => self.name = value.to_string(),
            "arch" => self.arch = value.parse().map_err(|e: talu_core::Error| usage(e.to_string()))?,
            "dataset" => self.dataset = value.parse().map_err(|e: talu_core::Error| usage(e.to_string()))?,
            "activation" => {
                self.activation = value.parse().map_err(|e: talu_core::Error| usage(e.to_string()))?
            }
            "leaky_slope" => self.leaky_slope = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "bn" => self.bn = parse_bool(key, value)?,
            "bn_momentum" => self.bn_momentum = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "momentum" => self.momentum = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "subset" => self.subset = parse(key, value)?,
            "test_subset" => self.test_subset = parse(key, value)?,
            "data_dir" => self.data_dir = PathBuf::from(value),
            "out" => self.out = PathBuf::from(value),
            "precision" => self.precision = value.parse().map_err(usage)?,
            "deterministic" => self.deterministic = parse_bool(key, value)?,
            "divergence_loss_cap" => self.divergence_loss_cap = parse(key, value)?,
            other => {
                return Err(usage(format!(
                    "unknown config key {other:?}; valid keys: {}",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("line {}: expected `key = value`, got {line:?}", n + 1)))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(usage("epochs and batch_size must be positive"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(usage(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.bn_momentum) {
            return Err(usage(format!("bn_momentum must be in [0, 1), got {}", self.bn_momentum)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(usage(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        Ok(())
    }

    pub fn run_name(&self) -> String {
        if !self.name.is_empty() {
            return self.name.clone();
        }
        format!(
            "{}-{}-{}-{}-lr{}-s{}",
            self.dataset,
            self.arch.name(),
            self.activation.name(),
            if self.bn { "bn" } else { "nobn" },
            self.lr,
            self.seed
        )
    }

    pub fn data_dir(&self) -> PathBuf {
        if self.data_dir.as_os_str().is_empty() {
            PathBuf::from("data").join(self.dataset.name())
        } else {
            self.data_dir.clone()
        }
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out.join(self.run_name())
    }

    pub fn activation_spec(&self) -> Activation {
        match self.activation.default_spec() {
            Activation::LeakyRelu { .. } => Activation::LeakyRelu {
                slope: self.leaky_slope,
            },
            Activation::Prelu { .. } => Activation::Prelu {
                slope: self.leaky_slope,
            },
            other => other,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            architecture: self.arch,
            activation: self.activation_spec(),
            use_batchnorm: self.bn,
            input_shape: self.dataset.image_shape(),
            seed: self.seed,
            batchnorm: BatchNormConfig {
                momentum: self.bn_momentum,
                ..BatchNormConfig::default()
            },
            ..ModelConfig::default()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            momentum: self.momentum,
            seed: self.seed,
            divergence_loss_cap: self.divergence_loss_cap,
            ..TrainConfig::default()
        }
    }

    /// `key = value` text that [`RunConfig::apply_text`] maps back to `self`.
    pub fn to_resolved(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("name", self.run_name());
        put("arch", self.arch.name().into());
        put("dataset", self.dataset.name().into());
        put("activation", self.activation.name().into());
        put("leaky_slope", self.leaky_slope.to_string());
        put("lr", self.lr.to_string());
        put("bn", self.bn.to_string());
        put("bn_momentum", self.bn_momentum.to_string());
        put("epochs", self.epochs.to_string());
        put("batch_size", self.batch_size.to_string());
        put("momentum", self.momentum.to_string());
        put("seed", self.seed.to_string());
        put("subset", self.subset.to_string());
        put("test_subset", self.test_subset.to_string());
        put("data_dir", self.data_dir().display().to_string());
        put("out", self.out.display().to_string());
        put("precision", self.precision.to_string());
        put("deterministic", self.deterministic.to_string());
        put("divergence_loss_cap", self.divergence_loss_cap.to_string());
        s
    }
}
