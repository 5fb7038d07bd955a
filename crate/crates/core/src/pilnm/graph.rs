use ndarray::Array2;

use crate::batch::Batch;
use crate::error::{Error, Result};
use crate::nn::{gru_cell, mlp2};
use crate::numerics::{concat_cols, ode_solve, rk4_step, Activation, BoundParams, NumericsError, Tape, Var};
use crate::physics::{droop_rhs, network_closed_form, NUM_CHANNELS};

use super::elbo::ElboMetrics;
use super::{PiLnmModel, PHYSICS_DIM};

/// Taped forward pass of a [`PiLnmModel`] with its weights bound to a tape.
pub struct ElboGraph<'m, 't> {
    model: &'m PiLnmModel,
    bp: &'m BoundParams<'t>,
    tape: &'t Tape,
}

pub(crate) struct ElboOutput<'t> {
    pub loss: Var<'t>,
    pub metrics: ElboMetrics,
}

impl<'m, 't> ElboGraph<'m, 't> {
    pub fn new(model: &'m PiLnmModel, bp: &'m BoundParams<'t>, tape: &'t Tape) -> Self {
        Self { model, bp, tape }
    }

    /// Channel std of the physics observations, `1 × 4`.
    fn physics_scale(&self) -> Array2<f64> {
        Array2::from_shape_fn((1, PHYSICS_DIM), |(_, c)| self.model.normalizer.std[c])
    }

    /// `z_r` in normalized units, the form the neural parts see.
    fn physics_features(&self, state: Var<'t>) -> Var<'t> {
        let n = &self.model.normalizer;
        let shift = Array2::from_shape_fn((1, PHYSICS_DIM), |(_, c)| -n.mean[c] / n.std[c]);
        let scale = Array2::from_shape_fn((1, PHYSICS_DIM), |(_, c)| 1.0 / n.std[c]);
        state.cols(0, PHYSICS_DIM) * self.tape.constant(scale) + self.tape.constant(shift)
    }

    /// Neural-network view of the latent: normalized `z_r` next to `z`.
    fn features(&self, state: Var<'t>) -> Var<'t> {
        let dim = self.model.latent_dim();
        concat_cols(&[self.physics_features(state), state.cols(PHYSICS_DIM, dim)])
    }

    fn encoder_field(&self, h: Var<'t>) -> Var<'t> {
        mlp2(self.bp, "enc.ode1", "enc.ode2", h)
    }

    /// ODE-RNN over `steps` (physical units, forward time order), consumed
    /// newest first. Returns `(μ, σ)`, each `batch × latent`.
    pub fn encode(&self, steps: &[Array2<f64>], x0_physics: &Array2<f64>) -> Result<(Var<'t>, Var<'t>)> {
        let n = steps.len();
        if n == 0 {
            return Err(Error::Contract("encoder needs at least one observation".into()));
        }
        let rows = steps[0].nrows();
        let hidden = self.model.config.encoder_hidden;
        let dim = self.model.latent_dim();
        let norm = &self.model.normalizer;
        let dt = self.model.dt;

        let mut h = self.tape.constant(Array2::zeros((rows, hidden)));
        for i in (0..n).rev() {
            if i + 1 < n {
                // carry the hidden state back one interval
                let mut reverse = |s: &Var<'t>, _t: f64| -> Result<Var<'t>, NumericsError> {
                    Ok(-self.encoder_field(*s))
                };
                h = rk4_step(&mut reverse, &h, 0.0, dt)?;
            }
            let x = self.tape.constant(norm.normalize(&steps[i]));
            h = gru_cell(self.bp, "enc.gru", x, h);
        }
        if !h.is_finite() {
            return Err(Error::Model("non-finite encoder hidden state".into()));
        }
        let (w, b) = self.bp.dense("enc.head");
        let out = h.dense(w, b, Activation::Identity);
        // physics coordinates are offsets from the observed x₀ in
        // normalized units
        let anchor = self.tape.constant(x0_physics.clone());
        let scale = self.tape.constant(self.physics_scale());
        let mu = concat_cols(&[
            out.cols(0, PHYSICS_DIM) * scale + anchor,
            out.cols(PHYSICS_DIM, dim),
        ]);
        let sigma = concat_cols(&[
            out.cols(dim, dim + PHYSICS_DIM).softplus() * scale,
            out.cols(dim + PHYSICS_DIM, 2 * dim).softplus(),
        ]);
        Ok((mu, sigma))
    }

    /// `d/dt [z_r; z] = [f̂_gfm(z_r, poi(z_r, z)); f_θ(z, z_r)]`.
    pub fn dynamics(&self, state: Var<'t>, _t: f64, load: Var<'t>) -> Result<Var<'t>> {
        let dim = self.model.latent_dim();
        let neural = state.cols(PHYSICS_DIM, dim);

        let (w1, b1) = self.bp.dense("field.l1");
        let (w2, b2) = self.bp.dense("field.l2");
        let (w3, b3) = self.bp.dense("field.out");
        let d_neural = self
            .features(state)
            .dense(w1, b1, Activation::Tanh)
            .dense(w2, b2, Activation::Tanh)
            .dense(w3, b3, Activation::Identity);

        let n = &self.model.normalizer;
        let unit = Array2::from_shape_vec((1, 3), vec![n.std[3], n.std[4], n.std[5]]).expect("row");
        let correction = mlp2(self.bp, "coupling.l1", "coupling.out", neural) * self.tape.constant(unit);
        let theta = state.col(0);
        let v_int = state.col(3);
        let net = network_closed_form(v_int, theta, load, &self.model.network_constants());
        let poi = [
            net[0] + correction.col(0),
            net[1] + correction.col(1),
            net[2] + correction.col(2),
        ];
        let physics = [state.col(0), state.col(1), state.col(2), state.col(3)];
        let d = droop_rhs(physics, poi, &self.model.approx);
        let out = concat_cols(&[d[0], d[1], d[2], d[3], d_neural]);
        Ok(out)
    }

    /// Identity readout of the physics latents plus an MLP head for `P`, `Q`.
    pub fn decode(&self, state: Var<'t>) -> Var<'t> {
        let n = &self.model.normalizer;
        let scale = Array2::from_shape_vec((1, 2), vec![n.std[4], n.std[5]]).expect("row");
        let shift = Array2::from_shape_vec((1, 2), vec![n.mean[4], n.mean[5]]).expect("row");
        let pq = mlp2(self.bp, "decoder.l1", "decoder.out", self.features(state)) * self.tape.constant(scale)
            + self.tape.constant(shift);
        concat_cols(&[state.cols(0, PHYSICS_DIM), pq])
    }

    pub fn rollout(&self, z0: Var<'t>, load: Var<'t>, times: &[f64]) -> Result<Vec<Var<'t>>> {
        let mut f = |s: &Var<'t>, t: f64| self.dynamics(*s, t, load);
        ode_solve(&mut f, z0, times, self.model.config.substeps)
    }

    pub(crate) fn elbo(&self, batch: &Batch, noise: &Array2<f64>) -> Result<ElboOutput<'t>> {
        let rows = batch.size();
        let dim = self.model.latent_dim();
        if batch.is_empty() || rows == 0 {
            return Err(Error::Contract("empty batch".into()));
        }
        if noise.dim() != (rows, dim) {
            return Err(Error::Contract(format!(
                "noise shape {:?}, expected {:?}",
                noise.dim(),
                (rows, dim)
            )));
        }
        let cond = self.model.config.condition_steps.clamp(1, batch.len());
        let (mu, sigma) = self.encode(&batch.obs[..cond], &batch.initial_physics())?;
        let z0 = mu + sigma * self.tape.constant(noise.clone());
        let load = self.tape.constant(batch.loads.clone());
        let states = self.rollout(z0, load, &batch.times)?;

        let sigma_obs = self.model.config.sigma_obs;
        let weight = Array2::from_shape_fn((1, NUM_CHANNELS), |(_, c)| {
            1.0 / (self.model.normalizer.std[c] * sigma_obs[c])
        });
        let weight = self.tape.constant(weight);
        let mut sq_terms = Vec::with_capacity(states.len());
        let inv_std = self.model.normalizer.inv_std_row();
        let mut plain_sq = 0.0;
        for (s, x) in states.iter().zip(&batch.obs) {
            let x_hat = self.decode(*s);
            plain_sq += x_hat.with_value(|v| ((v - x) * &inv_std).iter().map(|r| r * r).sum::<f64>());
            let resid = (x_hat - self.tape.constant(x.clone())) * weight;
            sq_terms.push(resid.square().sum());
        }
        let sq_total = sum_all(&sq_terms);

        let steps = states.len() as f64;
        let norm_const: f64 = sigma_obs
            .iter()
            .map(|s| -steps * (s * (2.0 * std::f64::consts::PI).sqrt()).ln())
            .sum();
        // per-trajectory mean log-likelihood
        let log_lik = (sq_total * (-0.5 / rows as f64)).offset(norm_const);

        let var = sigma.square();
        let kl_terms = (var + mu.square() - var.ln()).offset(-1.0) * 0.5;
        let kl = kl_terms.sum() * (1.0 / rows as f64);

        let loss = kl - log_lik;
        let metrics = ElboMetrics {
            loss: loss.item(),
            reconstruction_mse: plain_sq / (rows * states.len() * NUM_CHANNELS) as f64,
            kl: kl.item(),
            log_likelihood: log_lik.item(),
        };
        if !metrics.loss.is_finite() {
            return Err(Error::Model(format!("non-finite loss {}", metrics.loss)));
        }
        Ok(ElboOutput { loss, metrics })
    }
}

fn sum_all<'t>(terms: &[Var<'t>]) -> Var<'t> {
    terms[1..].iter().fold(terms[0], |acc, t| acc + *t)
}
