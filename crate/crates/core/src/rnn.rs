//! Physics-free autoregressive GRU baseline.
//!
//! Works in normalized units: `x̂_{t+1} = x_t + head(h_{t+1})`, with
//! `h_{t+1} = GRU(embed(x_t), h_t)`.

use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::batch::Batch;
use crate::error::{Error, Result};
use crate::nn::{gru_cell, insert_gru};
use crate::normalize::Normalizer;
use crate::numerics::{Activation, BoundParams, ParamSet, Tape, Tensor, Var};
use crate::physics::NUM_CHANNELS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RnnConfig {
    pub embed: usize,
    pub hidden: usize,
    /// Teacher-forced observations before closed-loop prediction.
    pub warmup: usize,
}

impl Default for RnnConfig {
    fn default() -> Self {
        Self {
            embed: 32,
            hidden: 64,
            warmup: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnModel {
    pub config: RnnConfig,
    pub params: ParamSet,
    pub normalizer: Normalizer,
}

/// Taped single step on normalized inputs.
fn step_graph<'t>(bp: &BoundParams<'t>, h: Var<'t>, x: Var<'t>) -> (Var<'t>, Var<'t>) {
    let (we, be) = bp.dense("rnn.embed");
    let e = x.dense(we, be, Activation::Tanh);
    let h_next = gru_cell(bp, "rnn.gru", e, h);
    let (wo, bo) = bp.dense("rnn.out");
    let x_next = x + h_next.dense(wo, bo, Activation::Identity);
    (h_next, x_next)
}

impl RnnModel {
    pub fn new(config: RnnConfig, normalizer: Normalizer, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        ps.insert_dense("rnn.embed", NUM_CHANNELS, config.embed, false, &mut rng);
        insert_gru(&mut ps, "rnn.gru", config.embed, config.hidden, &mut rng);
        ps.insert_dense("rnn.out", config.hidden, NUM_CHANNELS, false, &mut rng);
        Self {
            config,
            params: ps,
            normalizer,
        }
    }

    pub fn zero_hidden(&self, rows: usize) -> Array2<f64> {
        Array2::zeros((rows, self.config.hidden))
    }

    /// One recurrent update on normalized observations, `rows × 6`.
    pub fn rnn_step(&self, h: &Array2<f64>, x: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        if h.ncols() != self.config.hidden || x.ncols() != NUM_CHANNELS || h.nrows() != x.nrows() {
            return Err(Error::Contract(format!(
                "rnn_step shapes: hidden {:?}, input {:?}",
                h.dim(),
                x.dim()
            )));
        }
        let tape = Tape::new();
        let bp = self.params.bind_constant(&tape);
        let (h1, x1) = step_graph(&bp, tape.constant(h.clone()), tape.constant(x.clone()));
        Ok((h1.value(), x1.value()))
    }

    /// Teacher-forced over `warmup` (physical units, `w × 6`), then
    /// closed-loop for `horizon` steps. Returns the `horizon × 6` predictions
    /// following the last warm-up sample.
    pub fn predict(&self, warmup: &Array2<f64>, horizon: usize) -> Result<Array2<f64>> {
        if warmup.nrows() == 0 || warmup.ncols() != NUM_CHANNELS {
            return Err(Error::Contract(format!(
                "warm-up needs >= 1 observation of 6 channels, got {:?}",
                warmup.dim()
            )));
        }
        let mut out = Array2::zeros((horizon, NUM_CHANNELS));
        if horizon == 0 {
            return Ok(out);
        }
        let tape = Tape::new();
        let bp = self.params.bind_constant(&tape);
        let norm = self.normalizer.normalize(warmup);
        let mut h = self.zero_hidden(1);
        let mut x_hat = Array2::zeros((1, NUM_CHANNELS));
        for row in norm.rows() {
            let x = row.to_owned().insert_axis(ndarray::Axis(0));
            let (h1, x1) = step_graph(&bp, tape.constant(h), tape.constant(x));
            h = h1.value();
            x_hat = x1.value();
        }
        for i in 0..horizon {
            if !x_hat.iter().all(|v| v.is_finite()) {
                return Err(Error::Model(format!("recurrent prediction diverged at step {i}")));
            }
            out.row_mut(i).assign(&self.normalizer.denormalize(&x_hat).row(0));
            if i + 1 < horizon {
                let (h1, x1) = step_graph(&bp, tape.constant(h), tape.constant(x_hat.clone()));
                h = h1.value();
                x_hat = x1.value();
            }
        }
        Ok(out)
    }

    /// Full trajectory estimate on the grid of `observed`: the first `warmup`
    /// samples are copied, the rest predicted closed-loop.
    pub fn emulate(&self, observed: &Array2<f64>) -> Result<Array2<f64>> {
        let w = self.config.warmup.clamp(1, observed.nrows());
        let mut out = observed.clone();
        let pred = self.predict(&observed.slice(s![0..w, ..]).to_owned(), observed.nrows() - w)?;
        out.slice_mut(s![w.., ..]).assign(&pred);
        Ok(out)
    }

    fn loss_graph<'t>(&self, bp: &BoundParams<'t>, tape: &'t Tape, batch: &Batch) -> Result<Var<'t>> {
        if batch.len() < 2 || batch.size() == 0 {
            return Err(Error::Contract("recurrent loss needs >= 2 steps of a non-empty batch".into()));
        }
        let mut h = tape.constant(self.zero_hidden(batch.size()));
        let mut terms = Vec::with_capacity(batch.len() - 1);
        for i in 0..batch.len() - 1 {
            let x = tape.constant(self.normalizer.normalize(&batch.obs[i]));
            let target = tape.constant(self.normalizer.normalize(&batch.obs[i + 1]));
            let (h1, x1) = step_graph(bp, h, x);
            h = h1;
            terms.push((x1 - target).square().sum());
        }
        let total = terms[1..].iter().fold(terms[0], |acc, t| acc + *t);
        let count = (terms.len() * batch.size() * NUM_CHANNELS) as f64;
        Ok(total * (1.0 / count))
    }

    /// Mean squared one-step-ahead error in normalized units.
    pub fn loss(&self, batch: &Batch) -> Result<f64> {
        let tape = Tape::new();
        let bp = self.params.bind_constant(&tape);
        Ok(self.loss_graph(&bp, &tape, batch)?.item())
    }

    pub fn loss_and_gradients(&self, batch: &Batch) -> Result<(f64, Vec<Tensor>)> {
        let tape = Tape::new();
        let bp = self.params.bind(&tape);
        let loss = self.loss_graph(&bp, &tape, batch)?;
        let value = loss.item();
        if !value.is_finite() {
            return Err(Error::Model(format!("non-finite recurrent loss {value}")));
        }
        let grads = tape.backward(loss)?;
        Ok((value, bp.gradients(&grads)))
    }
}

/// Mean of squared differences over every entry.
pub fn mean_squared_error(pred: &Array2<f64>, target: &Array2<f64>) -> Result<f64> {
    if pred.dim() != target.dim() || pred.is_empty() {
        return Err(Error::Contract(format!(
            "shape mismatch {:?} vs {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    Ok((pred - target).mapv(|v| v * v).mean().unwrap_or(0.0))
}
