//! Physics-informed latent neural ODE.
//!
//! The 24-dimensional latent is ordered `[z_r (4) | z (20)]`: the first
//! four coordinates are the physics latents `[θ, ω, Vᵉ, V]` evolved by the
//! representative droop model with frozen, approximate parameters; the
//! remaining ones evolve under a learned field `f_θ(z, z_r)`. The physics
//! block is driven by the POI network evaluated at its own `(V, θ)` plus a
//! learned correction read from `z`.

mod elbo;
mod graph;

use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::batch::Batch;
use crate::error::{Error, Result};
use crate::normalize::Normalizer;
use crate::numerics::{ParamSet, Tape};
use crate::physics::{GfmParams, NetworkConfig, NetworkConstants, NUM_CHANNELS};

pub use elbo::{gaussian_kl, gaussian_log_likelihood, ElboMetrics};
pub use graph::ElboGraph;

pub const PHYSICS_DIM: usize = 4;
/// The physics readout of `Vᵉ` is biased whenever the approximate `k_iv`
/// is off (its steady state is `V / k_iv`), so that channel gets a wide
/// noise scale; a tight one would pull the voltage latent off target.
pub const DEFAULT_SIGMA_OBS: [f64; NUM_CHANNELS] = [0.01, 0.01, 1.0, 0.01, 0.01, 0.01];
/// softplus(−5) ≈ 6.7e-3 normalized units of initial physics-latent spread.
const PHYSICS_SIGMA_BIAS: f64 = -5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiLnmConfig {
    /// Neural latent dimension; the full latent adds the four physics states.
    pub neural_dim: usize,
    pub encoder_hidden: usize,
    pub field_hidden: usize,
    pub coupling_hidden: usize,
    pub decoder_hidden: usize,
    /// Observation noise scale per channel, in normalized units.
    pub sigma_obs: [f64; NUM_CHANNELS],
    /// RK4 steps per observation interval.
    pub substeps: usize,
    /// Leading samples of each window seen by the encoder.
    pub condition_steps: usize,
}

impl Default for PiLnmConfig {
    fn default() -> Self {
        Self {
            neural_dim: 20,
            encoder_hidden: 32,
            field_hidden: 64,
            coupling_hidden: 32,
            decoder_hidden: 32,
            sigma_obs: DEFAULT_SIGMA_OBS,
            substeps: 1,
            condition_steps: 20,
        }
    }
}

impl PiLnmConfig {
    pub fn latent_dim(&self) -> usize {
        PHYSICS_DIM + self.neural_dim
    }
}

/// Latent state split into physics and neural parts.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    /// `[θ, ω, Vᵉ, V]`.
    pub z_r: [f64; PHYSICS_DIM],
    pub z: Vec<f64>,
}

impl LatentState {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.z_r.to_vec();
        v.extend_from_slice(&self.z);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            z_r: [v[0], v[1], v[2], v[3]],
            z: v[PHYSICS_DIM..].to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.z_r.iter().chain(&self.z).all(|v| v.is_finite())
    }

    fn row(&self) -> Array2<f64> {
        Array2::from_shape_vec((1, PHYSICS_DIM + self.z.len()), self.to_vec()).expect("row")
    }
}

/// Diagonal Gaussian approximate posterior over `z₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Reparameterized draw `μ + σ ⊙ ε`.
pub fn sample_z0(post: &Posterior, noise: &[f64]) -> Result<LatentState> {
    if noise.len() != post.mu.len() {
        return Err(Error::Contract(format!(
            "noise has {} entries, posterior has {}",
            noise.len(),
            post.mu.len()
        )));
    }
    let z: Vec<f64> = post
        .mu
        .iter()
        .zip(&post.sigma)
        .zip(noise)
        .map(|((m, s), e)| m + s * e)
        .collect();
    Ok(LatentState::from_slice(&z))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiLnmModel {
    pub config: PiLnmConfig,
    pub params: ParamSet,
    /// Frozen approximate droop parameters of the physics block.
    pub approx: GfmParams,
    pub network: NetworkConfig,
    pub normalizer: Normalizer,
    pub dt: f64,
}

impl PiLnmModel {
    pub fn new(
        config: PiLnmConfig,
        approx: GfmParams,
        network: NetworkConfig,
        normalizer: Normalizer,
        dt: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        let h = config.encoder_hidden;
        let d = config.latent_dim();
        ps.insert_dense("enc.ode1", h, h, false, &mut rng);
        ps.insert_dense("enc.ode2", h, h, false, &mut rng);
        crate::nn::insert_gru(&mut ps, "enc.gru", NUM_CHANNELS, h, &mut rng);
        ps.insert_dense("enc.head", h, 2 * d, false, &mut rng);
        ps.insert_dense("field.l1", d, config.field_hidden, false, &mut rng);
        ps.insert_dense("field.l2", config.field_hidden, config.field_hidden, false, &mut rng);
        ps.insert_dense("field.out", config.field_hidden, config.neural_dim, true, &mut rng);
        ps.insert_dense("coupling.l1", config.neural_dim, config.coupling_hidden, false, &mut rng);
        ps.insert_dense("coupling.out", config.coupling_hidden, 3, true, &mut rng);
        ps.insert_dense("decoder.l1", d, config.decoder_hidden, false, &mut rng);
        ps.insert_dense("decoder.out", config.decoder_hidden, 2, false, &mut rng);
        // physics part of the posterior starts at the observed x₀ with a
        // narrow spread
        if let Some(w) = ps.get_mut("enc.head.w") {
            w.slice_mut(s![.., 0..PHYSICS_DIM]).fill(0.0);
            w.slice_mut(s![.., d..d + PHYSICS_DIM]).fill(0.0);
        }
        if let Some(b) = ps.get_mut("enc.head.b") {
            b.slice_mut(s![.., 0..PHYSICS_DIM]).fill(0.0);
            b.slice_mut(s![.., d..d + PHYSICS_DIM]).fill(PHYSICS_SIGMA_BIAS);
        }
        Self {
            config,
            params: ps,
            approx,
            network,
            normalizer,
            dt,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim()
    }

    pub(crate) fn network_constants(&self) -> NetworkConstants {
        NetworkConstants::new(&self.network, self.approx.x_f)
    }

    /// Approximate posterior from the leading observations of `batch`
    /// (first row only for single-trajectory use).
    pub fn encode(&self, obs: &Array2<f64>) -> Result<Posterior> {
        if obs.nrows() < 2 || obs.ncols() != NUM_CHANNELS {
            return Err(Error::Contract(format!(
                "encoder needs >= 2 observations of 6 channels, got {:?}",
                obs.dim()
            )));
        }
        let tape = Tape::new();
        let bp = self.params.bind_constant(&tape);
        let g = ElboGraph::new(self, &bp, &tape);
        let steps: Vec<_> = obs
            .rows()
            .into_iter()
            .map(|r| r.to_owned().insert_axis(ndarray::Axis(0)))
            .collect();
        let x0 = obs.slice(s![0..1, 0..PHYSICS_DIM]).to_owned();
        let (mu, sigma) = g.encode(&steps, &x0)?;
        Ok(Posterior {
            mu: mu.value().row(0).to_vec(),
            sigma: sigma.value().row(0).to_vec(),
        })
    }

    /// Latent time derivative at `state` for a network carrying `load`.
    pub fn hybrid_dynamics(&self, state: &LatentState, t: f64, load: f64) -> Result<LatentState> {
        let tape = Tape::new();
        let bp = self.params.bind_constant(&tape);
        let g = ElboGraph::new(self, &bp, &tape);
        let load = tape.constant(Array2::from_elem((1, 1), load));
        let d = g.dynamics(tape.constant(state.row()), t, load)?;
        Ok(LatentState::from_slice(d.value().row(0).as_slice().expect("row")))
    }

    /// Observation estimate `[θ, ω, Vᵉ, V, Pⁿ, Qⁿ]`.
    pub fn decode(&self, state: &LatentState) -> [f64; NUM_CHANNELS] {
        let tape = Tape::new();
        let bp = self.params.bind_constant(&tape);
        let g = ElboGraph::new(self, &bp, &tape);
        let x = g.decode(tape.constant(state.row())).value();
        std::array::from_fn(|c| x[[0, c]])
    }

    /// Latent trajectory from `z0` across `times`.
    pub fn rollout(&self, z0: &LatentState, times: &[f64], load: f64) -> Result<Vec<LatentState>> {
        let tape = Tape::new();
        let bp = self.params.bind_constant(&tape);
        let g = ElboGraph::new(self, &bp, &tape);
        let load = tape.constant(Array2::from_elem((1, 1), load));
        let states = g.rollout(tape.constant(z0.row()), load, times)?;
        Ok(states
            .iter()
            .map(|s| LatentState::from_slice(s.value().row(0).as_slice().expect("row")))
            .collect())
    }

    /// Negative ELBO and its gradient with respect to every weight, in
    /// [`ParamSet`] order.
    pub fn loss_and_gradients(
        &self,
        batch: &Batch,
        noise: &Array2<f64>,
    ) -> Result<(ElboMetrics, Vec<crate::numerics::Tensor>)> {
        let tape = Tape::new();
        let bp = self.params.bind(&tape);
        let g = ElboGraph::new(self, &bp, &tape);
        let out = g.elbo(batch, noise)?;
        let grads = tape.backward(out.loss)?;
        Ok((out.metrics, bp.gradients(&grads)))
    }

    /// Negative ELBO without gradients.
    pub fn loss(&self, batch: &Batch, noise: &Array2<f64>) -> Result<ElboMetrics> {
        let tape = Tape::new();
        let bp = self.params.bind_constant(&tape);
        let g = ElboGraph::new(self, &bp, &tape);
        Ok(g.elbo(batch, noise)?.metrics)
    }
}

#[cfg(test)]
mod tests;
