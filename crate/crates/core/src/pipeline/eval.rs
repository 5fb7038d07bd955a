//! Closed-loop evaluation on held-out load steps and the RMSE report.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{s, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::dataset::{draw_events, format_f64};
use crate::physics::simulate::{step_count, OMEGA, V_INT};
use crate::physics::{simulate_event, GenerationConfig, NetworkConfig, Trajectory, CHANNELS, NUM_CHANNELS};
use crate::pilnm::{sample_z0, PiLnmModel};
use crate::rnn::RnnModel;

pub const REPORT_VERSION: u32 = 1;
pub const NOMINAL_HZ: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Prediction horizon, s.
    pub horizon: f64,
    /// Observed window handed to the encoder, s.
    pub warmup: f64,
    pub events: usize,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            horizon: 5.0,
            warmup: 0.2,
            events: 20,
            seed: 1001,
        }
    }
}

impl EvalSettings {
    pub fn validate(&self, dt: f64) -> Result<()> {
        let steps = step_count(self.horizon, dt)?;
        let warm = self.warmup_samples(dt);
        if warm < 2 || warm > steps {
            return Err(Error::InvalidConfig(format!(
                "warm-up {} s must cover 2..={steps} samples at dt {dt}",
                self.warmup
            )));
        }
        if self.events == 0 {
            return Err(Error::InvalidConfig("at least one evaluation event is required".into()));
        }
        Ok(())
    }

    pub fn warmup_samples(&self, dt: f64) -> usize {
        (self.warmup / dt).round() as usize
    }
}

/// Evaluated observation channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Internal voltage magnitude `V`, p.u.
    Voltage,
    /// Frequency, reported in Hz.
    Frequency,
}

impl Metric {
    pub fn channel(self) -> usize {
        match self {
            Metric::Voltage => V_INT,
            Metric::Frequency => OMEGA,
        }
    }

    fn scale(self) -> f64 {
        match self {
            Metric::Voltage => 1.0,
            Metric::Frequency => NOMINAL_HZ,
        }
    }
}

fn squared_error_sum(pred: &Array2<f64>, truth: &Array2<f64>, metric: Metric) -> Result<f64> {
    if pred.dim() != truth.dim() {
        return Err(Error::Contract(format!(
            "grid mismatch: prediction {:?}, truth {:?}",
            pred.dim(),
            truth.dim()
        )));
    }
    let (c, k) = (metric.channel(), metric.scale());
    Ok(pred
        .column(c)
        .iter()
        .zip(truth.column(c))
        .map(|(a, b)| (k * (a - b)).powi(2))
        .sum())
}

/// Root-mean-square error of one channel; frequency is converted to Hz.
pub fn rmse(pred: &Trajectory, truth: &Trajectory, metric: Metric) -> Result<f64> {
    if pred.times != truth.times {
        return Err(Error::Contract("prediction and truth are on different time grids".into()));
    }
    if truth.is_empty() {
        return Err(Error::Contract("empty trajectory".into()));
    }
    Ok((squared_error_sum(&pred.observations, &truth.observations, metric)? / truth.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelRmse {
    pub voltage: f64,
    pub frequency: f64,
}

impl ChannelRmse {
    /// `100 (baseline − candidate) / baseline` per channel.
    pub fn improvement(baseline: &ChannelRmse, candidate: &ChannelRmse) -> ChannelRmse {
        let pct = |b: f64, c: f64| if b == 0.0 { 0.0 } else { 100.0 * (b - c) / b };
        ChannelRmse {
            voltage: pct(baseline.voltage, candidate.voltage),
            frequency: pct(baseline.frequency, candidate.frequency),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventResult {
    pub load: f64,
    pub seed: u64,
    pub pilnm: ChannelRmse,
    pub rnn: ChannelRmse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportSeeds {
    pub dataset: u64,
    pub pilnm_train: u64,
    pub rnn_train: u64,
    pub eval: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    pub horizon: f64,
    pub dt: f64,
    pub warmup: f64,
    pub rnn_warmup_samples: usize,
    pub seeds: ReportSeeds,
    /// RMSE pooled over every event and time point.
    pub pilnm: ChannelRmse,
    pub rnn: ChannelRmse,
    pub improvement_percent: ChannelRmse,
    pub events: Vec<EventResult>,
}

impl EvalReport {
    /// Text table in the layout of the published comparison.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:>12} {:>12} {:>16}",
            "Metric (RMSE)", "RNN", "PI-LNM", "Improvement (%)"
        );
        let rows = [
            ("Voltage (pu)", self.rnn.voltage, self.pilnm.voltage, self.improvement_percent.voltage),
            (
                "Frequency (Hz)",
                self.rnn.frequency,
                self.pilnm.frequency,
                self.improvement_percent.frequency,
            ),
        ];
        for (name, r, p, i) in rows {
            let _ = writeln!(out, "{name:<16} {r:>12.3e} {p:>12.3e} {i:>16.1}");
        }
        let _ = writeln!(
            out,
            "{} held-out events, {} s horizon, eval seed {}",
            self.events.len(),
            self.horizon,
            self.seeds.eval
        );
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// One evaluated event with all three traces on the reference grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTrace {
    pub truth: Trajectory,
    pub pilnm: Array2<f64>,
    pub rnn: Array2<f64>,
}

impl EventTrace {
    /// CSV with `t`, then truth, PI-LNM and RNN blocks of the six channels.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for prefix in ["truth", "pilnm", "rnn"] {
            for c in CHANNELS {
                let _ = write!(out, ",{prefix}_{c}");
            }
        }
        out.push('\n');
        for (i, t) in self.truth.times.iter().enumerate() {
            out.push_str(&format_f64(*t));
            for block in [&self.truth.observations, &self.pilnm, &self.rnn] {
                for c in 0..NUM_CHANNELS {
                    out.push(',');
                    out.push_str(&format_f64(block[[i, c]]));
                }
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub report: EvalReport,
    pub traces: Vec<EventTrace>,
}

/// Load steps for evaluation: drawn with `seed` from `range`, skipping any
/// level that appears in `training_loads`.
pub fn held_out_events(count: usize, range: (f64, f64), seed: u64, training_loads: &[f64]) -> Vec<(f64, u64)> {
    let mut out = Vec::with_capacity(count);
    let mut round = 0u64;
    while out.len() < count {
        let draws = draw_events(count, range, seed.wrapping_add(round.wrapping_mul(0x9e37_79b9_7f4a_7c15)));
        for ev in draws {
            if out.len() < count && !training_loads.contains(&ev.0) && !out.iter().any(|o: &(f64, u64)| o.0 == ev.0) {
                out.push(ev);
            }
        }
        round += 1;
        if round > 1000 {
            break;
        }
    }
    out
}

/// PI-LNM emulation of one event: the encoder sees the observed warm-up,
/// then the posterior-mean latent is rolled forward over `times` with the
/// network solved at the latent's own `(V, θ)` throughout.
pub fn integrate_learned(
    model: &PiLnmModel,
    net: &NetworkConfig,
    load: f64,
    warmup: &Array2<f64>,
    times: &[f64],
) -> Result<Trajectory> {
    let mut model = model.clone();
    model.network = *net;
    let post = model.encode(warmup)?;
    let z0 = sample_z0(&post, &vec![0.0; post.mu.len()])?;
    let states = model.rollout(&z0, times, load)?;
    let mut obs = Array2::zeros((times.len(), NUM_CHANNELS));
    for (i, s) in states.iter().enumerate() {
        if !s.is_finite() {
            return Err(Error::Model(format!("non-finite latent at step {i}")));
        }
        obs.row_mut(i).assign(&ndarray::arr1(&model.decode(s)));
    }
    Ok(Trajectory {
        times: times.to_vec(),
        observations: obs,
        load,
        seed: 0,
    })
}

fn evaluate_event(
    pilnm: &PiLnmModel,
    rnn: &RnnModel,
    gen: &GenerationConfig,
    settings: &EvalSettings,
    (load, seed): (f64, u64),
) -> Result<(EventTrace, [f64; 4])> {
    let truth = simulate_event(&gen.truth, &gen.network, load, settings.horizon, gen.dt, seed)?;
    let warm = settings.warmup_samples(gen.dt);
    let observed = truth.observations.slice(s![0..warm, ..]).to_owned();
    let wrap = |e: Error| Error::Event {
        index: None,
        load,
        source: Box::new(e),
    };
    let p = integrate_learned(pilnm, &gen.network, load, &observed, &truth.times).map_err(wrap)?;
    let r = rnn.emulate(&truth.observations).map_err(wrap)?;
    let sums = [
        squared_error_sum(&p.observations, &truth.observations, Metric::Voltage)?,
        squared_error_sum(&p.observations, &truth.observations, Metric::Frequency)?,
        squared_error_sum(&r, &truth.observations, Metric::Voltage)?,
        squared_error_sum(&r, &truth.observations, Metric::Frequency)?,
    ];
    Ok((
        EventTrace {
            truth,
            pilnm: p.observations,
            rnn: r,
        },
        sums,
    ))
}

/// Runs both emulators on the same held-out events and pools their RMSE.
pub fn compare(
    pilnm: &PiLnmModel,
    rnn: &RnnModel,
    gen: &GenerationConfig,
    events: &[(f64, u64)],
    settings: &EvalSettings,
    seeds: ReportSeeds,
) -> Result<Comparison> {
    settings.validate(gen.dt)?;
    if events.is_empty() {
        return Err(Error::InvalidConfig("no evaluation events".into()));
    }
    if pilnm.normalizer != rnn.normalizer {
        return Err(Error::InvalidConfig(
            "models were trained with different normalization (different datasets?)".into(),
        ));
    }
    let results: Vec<Result<(EventTrace, [f64; 4])>> = events
        .par_iter()
        .enumerate()
        .map(|(i, ev)| {
            evaluate_event(pilnm, rnn, gen, settings, *ev).map_err(|e| match e {
                Error::Event { load, source, .. } => Error::Event {
                    index: Some(i),
                    load,
                    source,
                },
                other => Error::Event {
                    index: Some(i),
                    load: ev.0,
                    source: Box::new(other),
                },
            })
        })
        .collect();

    let mut totals = [0.0; 4];
    let mut points = 0usize;
    let mut traces = Vec::with_capacity(events.len());
    let mut per_event = Vec::with_capacity(events.len());
    for (ev, res) in events.iter().zip(results) {
        let (trace, sums) = res?;
        let n = trace.truth.len();
        for k in 0..4 {
            totals[k] += sums[k];
        }
        points += n;
        let r = |v: f64| (v / n as f64).sqrt();
        per_event.push(EventResult {
            load: ev.0,
            seed: ev.1,
            pilnm: ChannelRmse {
                voltage: r(sums[0]),
                frequency: r(sums[1]),
            },
            rnn: ChannelRmse {
                voltage: r(sums[2]),
                frequency: r(sums[3]),
            },
        });
        traces.push(trace);
    }
    let pooled = |v: f64| (v / points as f64).sqrt();
    let p = ChannelRmse {
        voltage: pooled(totals[0]),
        frequency: pooled(totals[1]),
    };
    let r = ChannelRmse {
        voltage: pooled(totals[2]),
        frequency: pooled(totals[3]),
    };
    let report = EvalReport {
        version: REPORT_VERSION,
        horizon: settings.horizon,
        dt: gen.dt,
        warmup: settings.warmup,
        rnn_warmup_samples: rnn.config.warmup,
        seeds,
        pilnm: p,
        rnn: r,
        improvement_percent: ChannelRmse::improvement(&r, &p),
        events: per_event,
    };
    Ok(Comparison { report, traces })
}

/// Writes `report.json`, `report.txt` and `events/event_NNN.csv`.
pub fn write_comparison(dir: &Path, cmp: &Comparison) -> Result<()> {
    let events_dir = dir.join("events");
    fs::create_dir_all(&events_dir).map_err(|e| Error::io(&events_dir, e))?;
    let json = dir.join("report.json");
    fs::write(&json, cmp.report.to_json()?).map_err(|e| Error::io(&json, e))?;
    let txt = dir.join("report.txt");
    fs::write(&txt, cmp.report.table()).map_err(|e| Error::io(&txt, e))?;
    for (i, t) in cmp.traces.iter().enumerate() {
        let path = events_dir.join(format!("event_{i:03}.csv"));
        fs::write(&path, t.to_csv()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(values: Vec<[f64; 6]>) -> Trajectory {
        let n = values.len();
        Trajectory {
            times: (0..n).map(|i| i as f64 * 0.01).collect(),
            observations: Array2::from_shape_fn((n, 6), |(i, c)| values[i][c]),
            load: 1.0,
            seed: 0,
        }
    }

    #[test]
    fn rmse_basics() {
        let a = traj(vec![[0.0, 1.0, 0.1, 1.0, 1.0, 0.0]; 5]);
        assert_eq!(rmse(&a, &a, Metric::Voltage).unwrap(), 0.0);
        let mut b = a.clone();
        b.observations.column_mut(V_INT).mapv_inplace(|v| v + 2e-3);
        assert!((rmse(&b, &a, Metric::Voltage).unwrap() - 2e-3).abs() < 1e-15);
        let mut c = a.clone();
        c.observations.column_mut(OMEGA).mapv_inplace(|v| v + 1e-4);
        assert!((rmse(&c, &a, Metric::Frequency).unwrap() - 6e-3).abs() < 1e-12);
    }

    #[test]
    fn rmse_rejects_grid_mismatch() {
        let a = traj(vec![[0.0; 6]; 5]);
        let b = traj(vec![[0.0; 6]; 4]);
        assert!(matches!(rmse(&a, &b, Metric::Voltage), Err(Error::Contract(_))));
    }

    #[test]
    fn improvement_is_zero_for_identical_models() {
        let r = ChannelRmse {
            voltage: 6e-3,
            frequency: 5.8e-3,
        };
        assert_eq!(ChannelRmse::improvement(&r, &r), ChannelRmse { voltage: 0.0, frequency: 0.0 });
        let p = ChannelRmse {
            voltage: 4e-3,
            frequency: 2.2e-3,
        };
        let i = ChannelRmse::improvement(&r, &p);
        assert!((i.voltage - 33.333333333333336).abs() < 1e-9);
        assert!((i.frequency - 62.068965517241381).abs() < 1e-9);
    }

    #[test]
    fn held_out_loads_avoid_training_levels() {
        let train: Vec<f64> = draw_events(50, (0.5, 5.0), 7).iter().map(|e| e.0).collect();
        // same seed as training: every first-round draw collides and is skipped
        let evs = held_out_events(20, (0.5, 5.0), 7, &train);
        assert_eq!(evs.len(), 20);
        assert!(evs.iter().all(|(l, _)| !train.contains(l) && (0.5..=5.0).contains(l)));
    }

    #[test]
    fn settings_validate() {
        EvalSettings::default().validate(0.01).unwrap();
        let s = EvalSettings {
            warmup: 0.0,
            ..Default::default()
        };
        assert!(s.validate(0.01).is_err());
    }
}
