use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pilnm::PiLnmConfig;
use crate::rnn::RnnConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Pilnm,
    Rnn,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Pilnm => "pilnm",
            ModelKind::Rnn => "rnn",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pilnm" => Ok(ModelKind::Pilnm),
            "rnn" => Ok(ModelKind::Rnn),
            other => Err(Error::InvalidConfig(format!("unknown model kind '{other}' (pilnm | rnn)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub iterations: usize,
    /// Samples per training window.
    pub window: usize,
    pub seed: u64,
    /// Relative error applied to `{m_p, m_q, k_pv, k_iv}` of the frozen prior.
    pub perturbation: f64,
    /// Iterations between intermediate checkpoints; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub lr_decay_every: usize,
    pub lr_decay: f64,
    pub pilnm: PiLnmConfig,
    pub rnn: RnnConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Pilnm,
            batch_size: 200,
            learning_rate: 0.02,
            iterations: 2000,
            window: 100,
            seed: 0,
            perturbation: 0.2,
            checkpoint_every: 500,
            lr_decay_every: 500,
            lr_decay: 0.5,
            pilnm: PiLnmConfig::default(),
            rnn: RnnConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, dataset_len: usize, trajectory_len: usize) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be >= 1".into()));
        }
        if self.batch_size == 0 || self.batch_size > dataset_len {
            return Err(Error::InvalidConfig(format!(
                "batch size {} must lie in 1..={dataset_len} (dataset size)",
                self.batch_size
            )));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.window < 2 || self.window > trajectory_len {
            return Err(Error::InvalidConfig(format!(
                "window {} must lie in 2..={trajectory_len} (trajectory length)",
                self.window
            )));
        }
        if !(0.0..1.0).contains(&self.perturbation) {
            return Err(Error::InvalidConfig(format!(
                "perturbation must lie in [0, 1), got {}",
                self.perturbation
            )));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::InvalidConfig(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay)));
        }
        if self.pilnm.sigma_obs.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidConfig("sigma_obs entries must be positive".into()));
        }
        if self.pilnm.substeps == 0 || self.pilnm.condition_steps < 2 {
            return Err(Error::InvalidConfig("substeps must be >= 1 and condition_steps >= 2".into()));
        }
        if self.rnn.warmup == 0 {
            return Err(Error::InvalidConfig("rnn warm-up must be >= 1".into()));
        }
        Ok(())
    }

    /// Learning rate in effect at 0-based `iteration`.
    pub fn learning_rate_at(&self, iteration: usize) -> f64 {
        if self.lr_decay_every == 0 {
            return self.learning_rate;
        }
        self.learning_rate * self.lr_decay.powi((iteration / self.lr_decay_every) as i32)
    }
}
