//! Trajectory datasets and their on-disk format.
//!
//! A dataset directory holds `metadata.json` and one CSV per trajectory
//! under `trajectories/`. CSV values are written with 17 significant
//! digits so a reload reproduces every `f64` bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::params::{GfmParams, NetworkConfig, TruthModel};
use super::simulate::{simulate_event, Trajectory, CHANNELS, NUM_CHANNELS};

pub const FORMAT_VERSION: u32 = 1;
const METADATA_FILE: &str = "metadata.json";
const TRAJECTORY_DIR: &str = "trajectories";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub dt: f64,
    pub horizon: f64,
    pub truth: TruthModel,
    pub network: NetworkConfig,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            horizon: 10.0,
            truth: TruthModel::default(),
            network: NetworkConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: GenerationConfig,
    pub load_range: (f64, f64),
    pub seed: u64,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn loads(&self) -> Vec<f64> {
        self.trajectories.iter().map(|t| t.load).collect()
    }

    /// Shared grid and channel layout across all trajectories.
    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.trajectories.first() else {
            return Err(Error::InvalidConfig("dataset has no trajectories".into()));
        };
        for (i, t) in self.trajectories.iter().enumerate() {
            if t.times != first.times {
                return Err(Error::Contract(format!("trajectory {i} has a different time grid")));
            }
            if t.observations.dim() != (t.times.len(), NUM_CHANNELS) {
                return Err(Error::Contract(format!(
                    "trajectory {i} has shape {:?}",
                    t.observations.dim()
                )));
            }
            if t.observations.iter().any(|v| !v.is_finite()) {
                return Err(Error::Contract(format!("trajectory {i} has non-finite values")));
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let traj_dir = dir.join(TRAJECTORY_DIR);
        fs::create_dir_all(&traj_dir).map_err(|e| Error::io(&traj_dir, e))?;
        let mut events = Vec::with_capacity(self.len());
        for (i, t) in self.trajectories.iter().enumerate() {
            let file = format!("traj_{i:05}.csv");
            write_trajectory_csv(&traj_dir.join(&file), t)?;
            events.push(EventRecord {
                file: format!("{TRAJECTORY_DIR}/{file}"),
                load: t.load,
                seed: t.seed,
            });
        }
        let meta = Metadata {
            version: FORMAT_VERSION,
            dt: self.config.dt,
            horizon: self.config.horizon,
            channels: CHANNELS.iter().map(|s| s.to_string()).collect(),
            truth: self.config.truth,
            network: self.config.network,
            load_range: self.load_range,
            seed: self.seed,
            events,
        };
        let path = dir.join(METADATA_FILE);
        let text = serde_json::to_string_pretty(&meta)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(METADATA_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: Metadata = serde_json::from_str(&text)?;
        if meta.version != FORMAT_VERSION {
            return Err(Error::format(&path, format!("unsupported version {}", meta.version)));
        }
        if meta.channels != CHANNELS {
            return Err(Error::format(&path, format!("unexpected channels {:?}", meta.channels)));
        }
        let trajectories = meta
            .events
            .iter()
            .map(|ev| {
                let (times, observations) = read_trajectory_csv(&dir.join(&ev.file))?;
                Ok(Trajectory {
                    times,
                    observations,
                    load: ev.load,
                    seed: ev.seed,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let ds = Dataset {
            config: GenerationConfig {
                dt: meta.dt,
                horizon: meta.horizon,
                truth: meta.truth,
                network: meta.network,
            },
            load_range: meta.load_range,
            seed: meta.seed,
            trajectories,
        };
        ds.validate()?;
        Ok(ds)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct EventRecord {
    file: String,
    load: f64,
    seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Metadata {
    version: u32,
    dt: f64,
    horizon: f64,
    channels: Vec<String>,
    truth: TruthModel,
    network: NetworkConfig,
    load_range: (f64, f64),
    seed: u64,
    events: Vec<EventRecord>,
}

/// `{:.16e}` is 17 significant digits, enough to round-trip any `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trajectory_csv(path: &Path, t: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let mut header = vec!["time"];
    header.extend(CHANNELS);
    w.write_record(&header)?;
    for (i, time) in t.times.iter().enumerate() {
        let mut rec = vec![format_f64(*time)];
        rec.extend(t.observations.row(i).iter().map(|v| format_f64(*v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Csv(e)
    }
}

pub fn read_trajectory_csv(path: &Path) -> Result<(Vec<f64>, Array2<f64>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    let mut expected = vec!["time".to_string()];
    expected.extend(CHANNELS.iter().map(|s| s.to_string()));
    if header != expected {
        return Err(Error::format(path, format!("unexpected header {header:?}")));
    }
    let mut times = Vec::new();
    let mut flat = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let mut values = rec.iter().map(|s| {
            s.parse::<f64>()
                .map_err(|e| Error::format(path, format!("bad number {s:?}: {e}")))
        });
        times.push(values.next().ok_or_else(|| Error::format(path, "empty row"))??);
        for v in values {
            flat.push(v?);
        }
    }
    let rows = times.len();
    let obs = Array2::from_shape_vec((rows, NUM_CHANNELS), flat)
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok((times, obs))
}

/// Draws `k` load steps uniformly from `load_range` and simulates each.
/// Deterministic in `seed`; events are simulated in parallel and keep
/// their draw order.
pub fn generate_dataset(
    k: usize,
    load_range: (f64, f64),
    config: &GenerationConfig,
    seed: u64,
) -> Result<Dataset> {
    if k == 0 {
        return Err(Error::InvalidConfig("need at least one event".into()));
    }
    if !(load_range.0 <= load_range.1) || load_range.0 < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "load range must be ordered and non-negative, got {load_range:?}"
        )));
    }
    config.truth.validate()?;
    config.network.validate()?;
    let events = draw_events(k, load_range, seed);
    let trajectories = events
        .par_iter()
        .enumerate()
        .map(|(i, &(load, ev_seed))| {
            simulate_event(&config.truth, &config.network, load, config.horizon, config.dt, ev_seed)
                .map_err(|e| match e {
                    Error::Event { load, source, .. } => Error::Event {
                        index: Some(i),
                        load,
                        source,
                    },
                    other => Error::Event {
                        index: Some(i),
                        load,
                        source: Box::new(other),
                    },
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        config: *config,
        load_range,
        seed,
        trajectories,
    })
}

/// `(load, per-event seed)` pairs drawn from a seeded generator.
pub fn draw_events(k: usize, load_range: (f64, f64), seed: u64) -> Vec<(f64, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|_| {
            let load = if load_range.0 == load_range.1 {
                load_range.0
            } else {
                rng.gen_range(load_range.0..=load_range.1)
            };
            (load, rng.gen())
        })
        .collect()
}

/// Multiplies each of `{m_p, m_q, k_pv, k_iv}` by an independent factor
/// drawn uniformly from `[1 − fraction, 1 + fraction]`.
pub fn perturb_params(params: &GfmParams, fraction: f64, seed: u64) -> Result<GfmParams> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidConfig(format!(
            "perturbation fraction must lie in [0, 1), got {fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut factor = || {
        if fraction == 0.0 {
            1.0
        } else {
            rng.gen_range(1.0 - fraction..=1.0 + fraction)
        }
    };
    let mut out = *params;
    out.m_p *= factor();
    out.m_q *= factor();
    out.k_pv *= factor();
    out.k_iv *= factor();
    Ok(out)
}

/// Directory path for trajectory `i`; exposed for tooling.
pub fn trajectory_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(TRAJECTORY_DIR).join(format!("traj_{i:05}.csv"))
}
