//! Run configuration: a JSON file plus command-line overrides.
//!
//! Relative paths resolve against the directory holding the config file.
//! The config hash covers everything except `paths`, so moving a run to a
//! different directory keeps its artifacts valid.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use slicecast_core::models::{ModelConfig, ModelKind};
use slicecast_core::policy::PolicyRules;
use slicecast_core::preprocess::FillPolicy;
use slicecast_core::train::{SplitSpec, TrainOptions};

use crate::error::{Error, Result};
use crate::formats::{parse_json, read_text, to_json};

pub const OUTPUT_DIR_ENV: &str = "SLICECAST_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// SNDlib native network file.
    pub topology: PathBuf,
    /// Directory of timestamped demand snapshots.
    pub demands: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Keep the archive cadence.
    None,
    /// Per-day maximum at UTC midnight boundaries.
    #[default]
    DailyMax,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessSettings {
    pub fill: FillPolicy,
    pub aggregation: Aggregation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlicingSettings {
    /// Jaccard threshold for merging footprints; 1.0 merges identical ones only.
    pub theta: f64,
}

impl Default for SlicingSettings {
    fn default() -> Self {
        Self { theta: 1.0 }
    }
}

/// Model hyperparameters; channel count and seed come from the data and the
/// run seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSettings {
    pub input_len: usize,
    pub label_len: usize,
    pub horizon: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub moving_avg_kernel: usize,
    pub autocorr_factor: f64,
    pub dropout: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let p = ModelConfig::preset(96, 1);
        Self {
            input_len: p.input_len,
            label_len: p.label_len,
            horizon: p.horizon,
            d_model: p.d_model,
            n_heads: p.n_heads,
            d_ff: p.d_ff,
            encoder_layers: p.encoder_layers,
            decoder_layers: p.decoder_layers,
            moving_avg_kernel: p.moving_avg_kernel,
            autocorr_factor: p.autocorr_factor,
            dropout: p.dropout,
        }
    }
}

impl ModelSettings {
    pub fn to_config(&self, channels: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            input_len: self.input_len,
            label_len: self.label_len,
            horizon: self.horizon,
            channels,
            d_model: self.d_model,
            n_heads: self.n_heads,
            d_ff: self.d_ff,
            encoder_layers: self.encoder_layers,
            decoder_layers: self.decoder_layers,
            moving_avg_kernel: self.moving_avg_kernel,
            autocorr_factor: self.autocorr_factor,
            dropout: self.dropout,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let d = TrainOptions::default();
        Self {
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            patience: d.patience,
        }
    }
}

impl TrainSettings {
    pub fn to_options(&self, seed: u64) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            patience: self.patience,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub preprocess: PreprocessSettings,
    #[serde(default)]
    pub slicing: SlicingSettings,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default)]
    pub policy: PolicyRules,
    /// Models trained and evaluated, in order.
    #[serde(default = "default_models")]
    pub models: Vec<ModelKind>,
    /// Model whose forecasts drive policy generation.
    #[serde(default = "default_primary")]
    pub primary: ModelKind,
}

fn default_seed() -> u64 {
    TrainOptions::default().seed
}

fn default_models() -> Vec<ModelKind> {
    vec![
        ModelKind::Autoformer,
        ModelKind::Pointwise,
        ModelKind::Persistence,
    ]
}

fn default_primary() -> ModelKind {
    ModelKind::Autoformer
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub topology: Option<PathBuf>,
    pub demands: Option<PathBuf>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
}

#[derive(Serialize)]
struct HashView<'a> {
    seed: u64,
    preprocess: &'a PreprocessSettings,
    slicing: &'a SlicingSettings,
    model: &'a ModelSettings,
    split: &'a SplitSpec,
    train: &'a TrainSettings,
    policy: &'a PolicyRules,
    models: &'a [ModelKind],
    primary: ModelKind,
}

impl RunConfig {
    pub fn new(paths: Paths, seed: u64) -> Self {
        Self {
            paths,
            seed,
            preprocess: PreprocessSettings::default(),
            slicing: SlicingSettings::default(),
            model: ModelSettings::default(),
            split: SplitSpec::default(),
            train: TrainSettings::default(),
            policy: PolicyRules::default(),
            models: default_models(),
            primary: default_primary(),
        }
    }

    pub fn from_json(path: &Path, text: &str) -> Result<Self> {
        parse_json(path, text)
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }

    /// Loads `path`, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_json(path, &read_text(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.paths.topology,
            &mut cfg.paths.demands,
            &mut cfg.paths.output,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Precedence: flag, then `SLICECAST_OUTPUT_DIR` (output only), then file.
    pub fn apply(&mut self, o: &Overrides, env_output: Option<PathBuf>) {
        if let Some(p) = o.output.clone().or(env_output) {
            self.paths.output = p;
        }
        if let Some(p) = &o.topology {
            self.paths.topology = p.clone();
        }
        if let Some(p) = &o.demands {
            self.paths.demands = p.clone();
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(e) = o.epochs {
            self.train.epochs = e;
        }
    }

    /// Checks value ranges; `require_inputs` also demands that the network
    /// file and the snapshot directory exist.
    pub fn validate(&self, require_inputs: bool) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        self.split
            .validate()
            .or_else(|e| bad("split", e.to_string()))?;
        self.policy
            .validate()
            .or_else(|e| bad("policy", e.to_string()))?;
        self.model
            .to_config(1, self.seed)
            .validate()
            .or_else(|e| bad("model", e.to_string()))?;
        if !(0.0..=1.0).contains(&self.slicing.theta) {
            return bad(
                "slicing.theta",
                format!("{} outside [0, 1]", self.slicing.theta),
            );
        }
        if self.models.is_empty() {
            return bad("models", "at least one model is required".into());
        }
        if !self.models.contains(&self.primary) {
            return bad(
                "primary",
                format!("`{}` is not listed in models", self.primary.tag()),
            );
        }
        if self.train.batch_size == 0 {
            return bad("train.batch_size", "must be positive".into());
        }
        if !(self.train.learning_rate > 0.0 && self.train.learning_rate.is_finite()) {
            return bad("train.learning_rate", "must be positive".into());
        }
        if require_inputs {
            if !self.paths.topology.is_file() {
                return bad(
                    "paths.topology",
                    format!("{} does not exist", self.paths.topology.display()),
                );
            }
            if !self.paths.demands.is_dir() {
                return bad(
                    "paths.demands",
                    format!("{} is not a directory", self.paths.demands.display()),
                );
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON of every setting except paths.
    pub fn hash(&self) -> String {
        let view = HashView {
            seed: self.seed,
            preprocess: &self.preprocess,
            slicing: &self.slicing,
            model: &self.model,
            split: &self.split,
            train: &self.train,
            policy: &self.policy,
            models: &self.models,
            primary: self.primary,
        };
        let bytes = serde_json::to_vec(&view).expect("config serialises");
        hex::encode(Sha256::digest(bytes))
    }
}
