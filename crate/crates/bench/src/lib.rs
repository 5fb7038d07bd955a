//! Shared fixtures for the benchmarks.

use ndarray::Array2;
use pilnm_core::batch::Batch;
use pilnm_core::normalize::Normalizer;
use pilnm_core::physics::{generate_dataset, perturb_params, Dataset, GenerationConfig, GfmParams, NetworkConfig};
use pilnm_core::pilnm::{PiLnmConfig, PiLnmModel};
use pilnm_core::rnn::{RnnConfig, RnnModel};

pub struct Fixture {
    pub dataset: Dataset,
    pub batch: Batch,
    pub pilnm: PiLnmModel,
    pub rnn: RnnModel,
    /// Zero reparameterization noise, `batch × latent`.
    pub noise: Array2<f64>,
}

/// `events` trajectories cut to `window` samples, with freshly initialized
/// models of the default architecture.
pub fn fixture(events: usize, window: usize) -> Fixture {
    let gen = GenerationConfig {
        horizon: window as f64 * 0.01,
        ..Default::default()
    };
    let dataset = generate_dataset(events, (0.5, 5.0), &gen, 1).expect("dataset");
    let norm = Normalizer::fit(&dataset.trajectories);
    let approx = perturb_params(&GfmParams::default(), 0.2, 1).expect("perturb");
    let pilnm = PiLnmModel::new(PiLnmConfig::default(), approx, NetworkConfig::default(), norm.clone(), 0.01, 0);
    let rnn = RnnModel::new(RnnConfig::default(), norm, 0);
    let refs: Vec<_> = dataset.trajectories.iter().collect();
    let batch = Batch::from_windows(&refs, 0, window).expect("batch");
    let noise = Array2::zeros((events, pilnm.latent_dim()));
    Fixture {
        dataset,
        batch,
        pilnm,
        rnn,
        noise,
    }
}
