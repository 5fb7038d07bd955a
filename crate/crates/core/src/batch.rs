//! Time-major batches cut from dataset trajectories.

use ndarray::{s, Array2};

use crate::error::{Error, Result};
use crate::physics::{Trajectory, NUM_CHANNELS};

/// `len` consecutive samples from each selected trajectory, stored
/// time-major: `obs[i]` is the `batch × 6` block at window step `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub times: Vec<f64>,
    pub obs: Vec<Array2<f64>>,
    /// Post-event load of each row, `batch × 1`.
    pub loads: Array2<f64>,
}

impl Batch {
    pub fn from_windows(trajs: &[&Trajectory], start: usize, len: usize) -> Result<Self> {
        if trajs.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        if len == 0 {
            return Err(Error::Contract("window length must be positive".into()));
        }
        let first = trajs[0];
        if start + len > first.len() {
            return Err(Error::Contract(format!(
                "window {start}..{} exceeds trajectory length {}",
                start + len,
                first.len()
            )));
        }
        for t in trajs {
            if t.times != first.times {
                return Err(Error::Contract("batch trajectories must share the time grid".into()));
            }
        }
        let b = trajs.len();
        let obs = (start..start + len)
            .map(|i| {
                let mut block = Array2::zeros((b, NUM_CHANNELS));
                for (r, t) in trajs.iter().enumerate() {
                    block.row_mut(r).assign(&t.observations.row(i));
                }
                block
            })
            .collect();
        let loads = Array2::from_shape_fn((b, 1), |(r, _)| trajs[r].load);
        let t0 = first.times[start];
        let times = first.times[start..start + len].iter().map(|t| t - t0).collect();
        Ok(Self { times, obs, loads })
    }

    pub fn whole(traj: &Trajectory) -> Result<Self> {
        Self::from_windows(&[traj], 0, traj.len())
    }

    pub fn size(&self) -> usize {
        self.loads.nrows()
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    /// Row `r` as a `len × 6` array.
    pub fn row_trajectory(&self, r: usize) -> Array2<f64> {
        let mut out = Array2::zeros((self.len(), NUM_CHANNELS));
        for (i, block) in self.obs.iter().enumerate() {
            out.row_mut(i).assign(&block.row(r));
        }
        out
    }

    /// First `n` steps.
    pub fn prefix(&self, n: usize) -> Batch {
        let n = n.min(self.len());
        Batch {
            times: self.times[..n].to_vec(),
            obs: self.obs[..n].to_vec(),
            loads: self.loads.clone(),
        }
    }

    /// Physics channels of the first sample, `batch × 4`.
    pub fn initial_physics(&self) -> Array2<f64> {
        self.obs[0].slice(s![.., 0..4]).to_owned()
    }
}
