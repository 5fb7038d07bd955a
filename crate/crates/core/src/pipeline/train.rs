//! Seeded training loops for both model kinds.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::batch::Batch;
use crate::error::{Error, Result};
use crate::normalize::Normalizer;
use crate::numerics::{adam_update, AdamState, ParamSet, Tensor};
use crate::physics::{perturb_params, Dataset};
use crate::pilnm::PiLnmModel;
use crate::rnn::RnnModel;

use super::checkpoint::{checkpoint_path, Checkpoint, TrainingInfo};
use super::config::{ModelKind, TrainConfig};

pub const LOSS_HISTORY_FILE: &str = "loss_history.csv";

/// One row of the loss history. For the recurrent baseline `loss` and
/// `reconstruction` are both the one-step MSE and `kl` is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub loss: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<LossRecord>,
}

/// Seed for the prior's parameter perturbation, derived from the train seed.
pub fn perturbation_seed(seed: u64) -> u64 {
    seed ^ 0x5eed_0f_9f1d
}

/// Window offset and trajectory indices for one iteration. Even
/// iterations start at the load step, odd ones anywhere in the horizon.
fn draw_batch(rng: &mut ChaCha8Rng, dataset_len: usize, batch: usize, traj_len: usize, window: usize, iteration: usize) -> (usize, Vec<usize>) {
    let mut idx = rand::seq::index::sample(rng, dataset_len, batch).into_vec();
    idx.sort_unstable();
    let start = if iteration % 2 == 0 || traj_len == window {
        0
    } else {
        rng.gen_range(0..=traj_len - window)
    };
    (start, idx)
}

fn standard_normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

trait Trainable {
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    fn step(&self, batch: &Batch, rng: &mut ChaCha8Rng) -> Result<(LossRecord, Vec<Tensor>)>;
    fn checkpoint(&self, info: TrainingInfo) -> Checkpoint;
}

impl Trainable for PiLnmModel {
    fn params(&self) -> &ParamSet {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
    fn step(&self, batch: &Batch, rng: &mut ChaCha8Rng) -> Result<(LossRecord, Vec<Tensor>)> {
        let noise = standard_normal(rng, batch.size(), self.latent_dim());
        let (m, g) = self.loss_and_gradients(batch, &noise)?;
        Ok((
            LossRecord {
                iteration: 0,
                loss: m.loss,
                reconstruction: m.reconstruction_mse,
                kl: m.kl,
            },
            g,
        ))
    }
    fn checkpoint(&self, info: TrainingInfo) -> Checkpoint {
        Checkpoint::from_pilnm(self, info)
    }
}

impl Trainable for RnnModel {
    fn params(&self) -> &ParamSet {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
    fn step(&self, batch: &Batch, _rng: &mut ChaCha8Rng) -> Result<(LossRecord, Vec<Tensor>)> {
        let (loss, g) = self.loss_and_gradients(batch)?;
        Ok((
            LossRecord {
                iteration: 0,
                loss,
                reconstruction: loss,
                kl: 0.0,
            },
            g,
        ))
    }
    fn checkpoint(&self, info: TrainingInfo) -> Checkpoint {
        Checkpoint::from_rnn(self, info)
    }
}

struct HistoryWriter {
    path: PathBuf,
    file: fs::File,
}

impl HistoryWriter {
    fn create(dir: &Path) -> Result<Self> {
        let path = dir.join(LOSS_HISTORY_FILE);
        let mut file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        writeln!(file, "iteration,loss,reconstruction,kl").map_err(|e| Error::io(&path, e))?;
        Ok(Self { path, file })
    }

    fn append(&mut self, r: &LossRecord) -> Result<()> {
        writeln!(
            self.file,
            "{},{:.16e},{:.16e},{:.16e}",
            r.iteration, r.loss, r.reconstruction, r.kl
        )
        .map_err(|e| Error::io(&self.path, e))
    }
}

/// Trains the model selected by `config.model` on `dataset`. With `out_dir`
/// set, the loss history, periodic checkpoints and the final
/// `checkpoint.json` are written there.
pub fn train(dataset: &Dataset, config: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    dataset.validate()?;
    let traj_len = dataset.trajectories.first().map(|t| t.len()).unwrap_or(0);
    config.validate(dataset.len(), traj_len)?;
    let normalizer = Normalizer::fit(&dataset.trajectories);
    match config.model {
        ModelKind::Pilnm => {
            let truth = dataset.config.truth.params;
            let approx = perturb_params(&truth, config.perturbation, perturbation_seed(config.seed))?;
            let model = PiLnmModel::new(
                config.pilnm,
                approx,
                dataset.config.network,
                normalizer,
                dataset.config.dt,
                config.seed,
            );
            run(model, dataset, config, out_dir)
        }
        ModelKind::Rnn => {
            let model = RnnModel::new(config.rnn, normalizer, config.seed);
            run(model, dataset, config, out_dir)
        }
    }
}

fn run<M: Trainable>(mut model: M, dataset: &Dataset, config: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    let traj_len = dataset.trajectories[0].len();
    let mut writer = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            Some(HistoryWriter::create(dir)?)
        }
        None => None,
    };
    let info = |iteration: usize| TrainingInfo {
        iteration,
        seed: config.seed,
        dataset_seed: dataset.seed,
        loss_history: out_dir.map(|_| LOSS_HISTORY_FILE.to_string()),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = AdamState::new(model.params().tensors(), config.learning_rate);
    let mut history = Vec::with_capacity(config.iterations);
    let mut last_checkpoint: Option<PathBuf> = None;

    for it in 0..config.iterations {
        let abort = |source: Error, last: &Option<PathBuf>| Error::Training {
            iteration: it + 1,
            last_checkpoint: last.clone(),
            source: Box::new(source),
        };
        let (start, idx) = draw_batch(&mut rng, dataset.len(), config.batch_size, traj_len, config.window, it);
        let refs: Vec<_> = idx.iter().map(|&i| &dataset.trajectories[i]).collect();
        let batch = Batch::from_windows(&refs, start, config.window).map_err(|e| abort(e, &last_checkpoint))?;
        let (mut record, grads) = model.step(&batch, &mut rng).map_err(|e| abort(e, &last_checkpoint))?;
        record.iteration = it + 1;
        opt.lr = config.learning_rate_at(it);
        adam_update(model.params_mut().tensors_mut(), &grads, &mut opt)
            .map_err(|e| abort(e.into(), &last_checkpoint))?;
        if !model.params().is_finite() {
            return Err(abort(Error::Model("non-finite weights after update".into()), &last_checkpoint));
        }
        if record.iteration % 100 == 0 || record.iteration == config.iterations {
            log::info!(
                "iteration {}/{} loss {:.4e} reconstruction {:.4e}",
                record.iteration,
                config.iterations,
                record.loss,
                record.reconstruction
            );
        } else {
            log::debug!("iteration {} loss {:.6e}", record.iteration, record.loss);
        }
        history.push(record);
        if let Some(w) = writer.as_mut() {
            w.append(&record)?;
        }
        if let Some(dir) = out_dir {
            let done = it + 1;
            if config.checkpoint_every > 0 && done % config.checkpoint_every == 0 && done < config.iterations {
                let path = checkpoint_path(dir, Some(done));
                model.checkpoint(info(done)).save(&path)?;
                last_checkpoint = Some(path);
            }
        }
    }

    let checkpoint = model.checkpoint(info(config.iterations));
    if let Some(dir) = out_dir {
        checkpoint.save(&checkpoint_path(dir, None))?;
    }
    Ok(TrainOutcome { checkpoint, history })
}

/// Centered moving average of `values` with the given window.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let half = w / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + w - half).min(values.len());
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{generate_dataset, GenerationConfig};

    fn tiny() -> Dataset {
        let cfg = GenerationConfig {
            horizon: 0.3,
            ..Default::default()
        };
        generate_dataset(4, (0.5, 5.0), &cfg, 2).unwrap()
    }

    fn small_config(model: ModelKind) -> TrainConfig {
        let mut c = TrainConfig {
            model,
            batch_size: 3,
            iterations: 1,
            window: 25,
            ..Default::default()
        };
        c.pilnm.neural_dim = 4;
        c.pilnm.field_hidden = 8;
        c.pilnm.encoder_hidden = 8;
        c.pilnm.condition_steps = 5;
        c.rnn.hidden = 8;
        c
    }

    #[test]
    fn single_iteration_writes_one_row() {
        let ds = tiny();
        for kind in [ModelKind::Pilnm, ModelKind::Rnn] {
            let dir = tempfile::tempdir().unwrap();
            let out = train(&ds, &small_config(kind), Some(dir.path())).unwrap();
            assert_eq!(out.history.len(), 1);
            let text = fs::read_to_string(dir.path().join(LOSS_HISTORY_FILE)).unwrap();
            assert_eq!(text.lines().count(), 2);
            assert_eq!(text.lines().next().unwrap(), "iteration,loss,reconstruction,kl");
            let back = Checkpoint::load(&checkpoint_path(dir.path(), None)).unwrap();
            assert_eq!(back, out.checkpoint);
            assert_eq!(back.kind(), kind);
        }
    }

    #[test]
    fn training_is_deterministic_and_prior_frozen() {
        let ds = tiny();
        let mut cfg = small_config(ModelKind::Pilnm);
        cfg.iterations = 3;
        let a = train(&ds, &cfg, None).unwrap();
        let b = train(&ds, &cfg, None).unwrap();
        assert_eq!(a, b);
        let expected = perturb_params(&ds.config.truth.params, 0.2, perturbation_seed(cfg.seed)).unwrap();
        assert_eq!(a.checkpoint.pilnm().unwrap().approx, expected);
    }

    #[test]
    fn periodic_checkpoints() {
        let ds = tiny();
        let mut cfg = small_config(ModelKind::Rnn);
        cfg.iterations = 5;
        cfg.checkpoint_every = 2;
        let dir = tempfile::tempdir().unwrap();
        train(&ds, &cfg, Some(dir.path())).unwrap();
        assert!(checkpoint_path(dir.path(), Some(2)).exists());
        assert!(checkpoint_path(dir.path(), Some(4)).exists());
        assert!(!checkpoint_path(dir.path(), Some(5)).exists());
    }

    #[test]
    fn batch_larger_than_dataset_is_rejected() {
        let ds = tiny();
        let mut cfg = small_config(ModelKind::Rnn);
        cfg.batch_size = 10;
        assert!(matches!(train(&ds, &cfg, None), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn smoothing() {
        assert_eq!(smooth(&[1.0, 2.0, 3.0], 1), vec![1.0, 2.0, 3.0]);
        let s = smooth(&[0.0, 3.0, 6.0, 9.0], 3);
        assert_eq!(s, vec![1.5, 3.0, 6.0, 7.5]);
    }
}
