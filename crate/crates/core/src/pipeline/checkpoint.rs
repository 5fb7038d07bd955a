//! Versioned JSON checkpoints for both model kinds.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normalize::Normalizer;
use crate::numerics::ParamSet;
use crate::physics::{GfmParams, NetworkConfig};
use crate::pilnm::{PiLnmConfig, PiLnmModel};
use crate::rnn::{RnnConfig, RnnModel};

use super::config::ModelKind;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    Pilnm {
        config: PiLnmConfig,
        approx: GfmParams,
        network: NetworkConfig,
        dt: f64,
    },
    Rnn {
        config: RnnConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingInfo {
    pub iteration: usize,
    pub seed: u64,
    pub dataset_seed: u64,
    /// Loss history file name, relative to the checkpoint's directory.
    pub loss_history: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub model: ModelSpec,
    pub normalizer: Normalizer,
    pub params: ParamSet,
    pub training: TrainingInfo,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Pilnm(PiLnmModel),
    Rnn(RnnModel),
}

impl Checkpoint {
    pub fn from_pilnm(model: &PiLnmModel, training: TrainingInfo) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            model: ModelSpec::Pilnm {
                config: model.config,
                approx: model.approx,
                network: model.network,
                dt: model.dt,
            },
            normalizer: model.normalizer,
            params: model.params.clone(),
            training,
        }
    }

    pub fn from_rnn(model: &RnnModel, training: TrainingInfo) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            model: ModelSpec::Rnn { config: model.config },
            normalizer: model.normalizer,
            params: model.params.clone(),
            training,
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self.model {
            ModelSpec::Pilnm { .. } => ModelKind::Pilnm,
            ModelSpec::Rnn { .. } => ModelKind::Rnn,
        }
    }

    pub fn to_model(&self) -> Model {
        match &self.model {
            ModelSpec::Pilnm {
                config,
                approx,
                network,
                dt,
            } => Model::Pilnm(PiLnmModel {
                config: *config,
                params: self.params.clone(),
                approx: *approx,
                network: *network,
                normalizer: self.normalizer,
                dt: *dt,
            }),
            ModelSpec::Rnn { config } => Model::Rnn(RnnModel {
                config: *config,
                params: self.params.clone(),
                normalizer: self.normalizer,
            }),
        }
    }

    pub fn pilnm(&self) -> Result<PiLnmModel> {
        match self.to_model() {
            Model::Pilnm(m) => Ok(m),
            Model::Rnn(_) => Err(Error::InvalidConfig("expected a pilnm checkpoint, found rnn".into())),
        }
    }

    pub fn rnn(&self) -> Result<RnnModel> {
        match self.to_model() {
            Model::Rnn(m) => Ok(m),
            Model::Pilnm(_) => Err(Error::InvalidConfig("expected an rnn checkpoint, found pilnm".into())),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})", ck.version),
            ));
        }
        if !ck.params.is_finite() {
            return Err(Error::format(path, "non-finite weights"));
        }
        Ok(ck)
    }
}

pub fn checkpoint_path(dir: &Path, iteration: Option<usize>) -> PathBuf {
    match iteration {
        Some(i) => dir.join(format!("checkpoint_{i:06}.json")),
        None => dir.join("checkpoint.json"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn info() -> TrainingInfo {
        TrainingInfo {
            iteration: 3,
            seed: 9,
            dataset_seed: 1,
            loss_history: Some("loss_history.csv".into()),
        }
    }

    #[test]
    fn pilnm_round_trip_is_bit_exact() {
        let norm = Normalizer {
            mean: [0.1, 1.0, 0.1, 1.0, 1.3, 0.2],
            std: [0.3, 1e-3, 7e-4, 1e-2, 0.9, 0.1],
        };
        let m = PiLnmModel::new(
            PiLnmConfig::default(),
            GfmParams::default(),
            NetworkConfig::default(),
            norm,
            0.01,
            11,
        );
        let ck = Checkpoint::from_pilnm(&m, info());
        let dir = tempfile::tempdir().unwrap();
        let path = checkpoint_path(dir.path(), None);
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.pilnm().unwrap(), m);
        for (a, b) in back.params.tensors().iter().zip(ck.params.tensors()) {
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn rnn_round_trip_and_kind() {
        let m = RnnModel::new(RnnConfig::default(), Normalizer::identity(), 5);
        let ck = Checkpoint::from_rnn(&m, info());
        assert_eq!(ck.kind(), ModelKind::Rnn);
        let json = ck.to_json().unwrap();
        assert!(json.contains("\"kind\": \"rnn\""));
        let back: Checkpoint = serde_json::from_str(&json).unwrap();
        assert_eq!(back.rnn().unwrap(), m);
        assert!(back.pilnm().is_err());
    }

    #[test]
    fn rejects_unknown_version() {
        let m = RnnModel::new(RnnConfig::default(), Normalizer::identity(), 5);
        let mut ck = Checkpoint::from_rnn(&m, info());
        ck.version = 99;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        ck.save(&path).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Format { .. })));
    }
}
