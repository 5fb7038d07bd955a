//! Resolved per-subcommand settings.
//!
//! Each value comes from the command line if given, else from the matching
//! table of the `--config` TOML file, else from the built-in default. The
//! resolved struct is echoed as TOML, so the printed block can be saved and
//! passed back through `--config` to repeat a run.

use std::path::{Path, PathBuf};

use pilnm_core::pilnm::PiLnmConfig;
use pilnm_core::pipeline::{EvalSettings, ModelKind, TrainConfig};
use pilnm_core::rnn::RnnConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSettings {
    pub k: usize,
    pub load_min: f64,
    pub load_max: f64,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    /// Measurement filter time constant of the ground-truth emulator.
    pub t_m: f64,
}

impl Default for GenerateSettings {
    fn default() -> Self {
        Self {
            k: 2000,
            load_min: 0.5,
            load_max: 5.0,
            dt: 0.01,
            horizon: 10.0,
            seed: 0,
            t_m: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    /// Dataset directory; the most recent `generate` run when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    pub model: ModelKind,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub iterations: usize,
    pub window: usize,
    pub seed: u64,
    pub perturbation: f64,
    pub checkpoint_every: usize,
    pub lr_decay_every: usize,
    pub lr_decay: f64,
    pub pilnm: PiLnmConfig,
    pub rnn: RnnConfig,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let c = TrainConfig::default();
        Self {
            dataset: None,
            model: c.model,
            batch_size: c.batch_size,
            learning_rate: c.learning_rate,
            iterations: c.iterations,
            window: c.window,
            seed: c.seed,
            perturbation: c.perturbation,
            checkpoint_every: c.checkpoint_every,
            lr_decay_every: c.lr_decay_every,
            lr_decay: c.lr_decay,
            pilnm: c.pilnm,
            rnn: c.rnn,
        }
    }
}

impl TrainSettings {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            model: self.model,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            iterations: self.iterations,
            window: self.window,
            seed: self.seed,
            perturbation: self.perturbation,
            checkpoint_every: self.checkpoint_every,
            lr_decay_every: self.lr_decay_every,
            lr_decay: self.lr_decay,
            pilnm: self.pilnm,
            rnn: self.rnn,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSettings {
    /// PI-LNM checkpoint file or training run directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pilnm: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rnn: Option<PathBuf>,
    /// Dataset the models were trained on; supplies the simulation setup
    /// and the training loads to hold out.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    pub events: usize,
    pub horizon: f64,
    pub warmup: f64,
    pub seed: u64,
}

impl Default for CompareSettings {
    fn default() -> Self {
        let e = EvalSettings::default();
        Self {
            pilnm: None,
            rnn: None,
            dataset: None,
            events: e.events,
            horizon: e.horizon,
            warmup: e.warmup,
            seed: e.seed,
        }
    }
}

impl CompareSettings {
    pub fn eval_settings(&self) -> EvalSettings {
        EvalSettings {
            horizon: self.horizon,
            warmup: self.warmup,
            events: self.events,
            seed: self.seed,
        }
    }
}

/// Layout of the `--config` file. Every table and key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub generate: GenerateSettings,
    pub train: TrainSettings,
    pub compare: CompareSettings,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read --config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("invalid --config {}: {e}", path.display())))
    }
}

/// Renders `settings` as a TOML table named `section`.
pub fn echo<T: Serialize>(section: &str, settings: &T) -> Result<String, CliError> {
    let table = std::collections::BTreeMap::from([(section, settings)]);
    toml::to_string(&table).map_err(|e| CliError::Runtime(format!("cannot render settings: {e}")))
}
