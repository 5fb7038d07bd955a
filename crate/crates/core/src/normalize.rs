//! Per-channel affine observation normalization.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::physics::{Trajectory, NUM_CHANNELS};

/// Mean and standard deviation per observation channel, fitted on the
/// training split only and shared by every model trained on it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: [f64; NUM_CHANNELS],
    pub std: [f64; NUM_CHANNELS],
}

const MIN_STD: f64 = 1e-6;

impl Normalizer {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; NUM_CHANNELS],
            std: [1.0; NUM_CHANNELS],
        }
    }

    pub fn fit(trajectories: &[Trajectory]) -> Self {
        let mut sum = [0.0; NUM_CHANNELS];
        let mut sq = [0.0; NUM_CHANNELS];
        let mut n = 0usize;
        for t in trajectories {
            for row in t.observations.rows() {
                for c in 0..NUM_CHANNELS {
                    sum[c] += row[c];
                    sq[c] += row[c] * row[c];
                }
                n += 1;
            }
        }
        let n = n.max(1) as f64;
        let mut mean = [0.0; NUM_CHANNELS];
        let mut std = [1.0; NUM_CHANNELS];
        for c in 0..NUM_CHANNELS {
            mean[c] = sum[c] / n;
            std[c] = (sq[c] / n - mean[c] * mean[c]).max(0.0).sqrt().max(MIN_STD);
        }
        Self { mean, std }
    }

    /// `(x − mean) / std` row-wise for a `rows × 6` block.
    pub fn normalize(&self, x: &Array2<f64>) -> Array2<f64> {
        (x - &self.mean_row()) / &self.std_row()
    }

    pub fn denormalize(&self, x: &Array2<f64>) -> Array2<f64> {
        x * &self.std_row() + &self.mean_row()
    }

    pub fn mean_row(&self) -> Array2<f64> {
        ndarray::arr1(&self.mean).insert_axis(Axis(0))
    }

    pub fn std_row(&self) -> Array2<f64> {
        ndarray::arr1(&self.std).insert_axis(Axis(0))
    }

    pub fn inv_std_row(&self) -> Array2<f64> {
        self.std_row().mapv(|s| 1.0 / s)
    }
}
