//! Load-step event simulation of the GFM–load–infinite-bus circuit.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ode_solve, uniform_grid};

use super::droop::{gfm_derivatives, truth_derivatives, TruthState};
use super::network::{network_closed_form, solve_network_from, NetworkConstants, PoiVoltage};
use super::params::{GfmParams, GfmState, NetworkConfig, Poi, TruthModel};

/// Observation channel names, in column order.
pub const CHANNELS: [&str; 6] = ["theta", "omega", "v_err", "v_int", "p_net", "q_net"];
pub const NUM_CHANNELS: usize = 6;
pub const OMEGA: usize = 1;
pub const V_INT: usize = 3;

/// One load-step event: `T × 6` observations on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub observations: Array2<f64>,
    /// Post-event load, p.u.
    pub load: f64,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn channel(&self, c: usize) -> ndarray::ArrayView1<'_, f64> {
        self.observations.column(c)
    }

    /// First `n` samples.
    pub fn prefix(&self, n: usize) -> Trajectory {
        let n = n.min(self.len());
        Trajectory {
            times: self.times[..n].to_vec(),
            observations: self.observations.slice(ndarray::s![..n, ..]).to_owned(),
            load: self.load,
            seed: self.seed,
        }
    }
}

/// Number of intervals `horizon / dt`, rejecting non-integral ratios.
pub fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(horizon > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "horizon and dt must be positive (horizon {horizon}, dt {dt})"
        )));
    }
    let n = (horizon / dt).round();
    if (n * dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(Error::InvalidConfig(format!(
            "horizon {horizon} is not an integer multiple of dt {dt}"
        )));
    }
    Ok(n as usize)
}

/// Pre-event steady state for `params` on `net`.
///
/// At rest the infinite bus fixes ω = 1, so the droop law pins the
/// delivered power to `P_set + (ω_set − 1)/m_p`, the voltage integrator
/// forces `e_v = 0`, and the actuator gives `Vᵉ = V/k_iv`. Solved for
/// `(V, θ)` by a damped Newton iteration with a finite-difference Jacobian.
pub fn steady_state(params: &GfmParams, net: &NetworkConfig) -> Result<(GfmState, Poi)> {
    let consts = NetworkConstants::new(net, params.x_f);
    let p_target = params.p_set + (params.omega_set - 1.0) / params.m_p;
    let residual = |v: f64, th: f64| {
        let [v_t, p, q] = network_closed_form(v, th, net.p_load, &consts);
        [
            p - p_target,
            v_t - (params.v_set + params.m_q * (params.q_set - q)),
        ]
    };
    let (mut v, mut th) = (net.v_inf.max(0.5), 0.0);
    let h = 1e-7;
    for _ in 0..100 {
        let r = residual(v, th);
        if !(r[0].is_finite() && r[1].is_finite()) {
            break;
        }
        if r[0].hypot(r[1]) < 1e-13 {
            let sol = solve_network_from(v, th, net, params.x_f, PoiVoltage::flat(net))?;
            let state = GfmState {
                theta: th,
                omega: 1.0,
                v_err: v / params.k_iv,
                v_int: v,
            };
            return Ok((state, sol.poi));
        }
        let rv = residual(v + h, th);
        let rt = residual(v, th + h);
        let j = [
            [(rv[0] - r[0]) / h, (rt[0] - r[0]) / h],
            [(rv[1] - r[1]) / h, (rt[1] - r[1]) / h],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let dv = (j[1][1] * r[0] - j[0][1] * r[1]) / det;
        let dth = (-j[1][0] * r[0] + j[0][0] * r[1]) / det;
        let scale = 1.0f64.min(0.2 / dv.abs().max(dth.abs()).max(1e-300));
        v -= scale * dv;
        th -= scale * dth;
    }
    Err(Error::Equilibrium(format!(
        "no steady state for load {} p.u.",
        net.p_load
    )))
}

/// Which dynamics drive an event simulation.
#[derive(Debug, Clone, Copy)]
pub enum Dynamics<'a> {
    /// Ground truth with measurement filters.
    Truth(&'a TruthModel),
    /// Representative four-state droop model.
    Representative(&'a GfmParams),
}

impl Dynamics<'_> {
    fn params(&self) -> &GfmParams {
        match self {
            Dynamics::Truth(t) => &t.params,
            Dynamics::Representative(p) => p,
        }
    }
}

/// Simulates a load step at `t = 0` from the pre-event equilibrium with
/// the load at `P_set`. Recorded `P`, `Q` are the network-solved delivered
/// powers at each sample.
pub fn simulate_event(
    truth: &TruthModel,
    net: &NetworkConfig,
    load_step: f64,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<Trajectory> {
    simulate_with(Dynamics::Truth(truth), net, load_step, horizon, dt, seed)
}

pub fn simulate_with(
    dynamics: Dynamics<'_>,
    net: &NetworkConfig,
    load_step: f64,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<Trajectory> {
    let wrap = |e: Error| Error::Event {
        index: None,
        load: load_step,
        source: Box::new(e),
    };
    let params = *dynamics.params();
    params.validate().map_err(wrap)?;
    net.validate().map_err(wrap)?;
    if !(load_step >= 0.0) {
        return Err(wrap(Error::InvalidConfig(format!(
            "load step must be >= 0, got {load_step}"
        ))));
    }
    let n = step_count(horizon, dt).map_err(wrap)?;

    let pre = net.with_load(params.p_set);
    let (x0, poi0) = steady_state(&params, &pre).map_err(wrap)?;
    let post = net.with_load(load_step);

    let initial = match dynamics {
        Dynamics::Truth(_) => TruthState {
            gfm: x0,
            p_meas: poi0.p,
            q_meas: poi0.q,
        }
        .to_vec(),
        Dynamics::Representative(_) => x0.to_array().to_vec(),
    };

    let mut guess = PoiVoltage::flat(&post);
    let mut rhs = |s: &Vec<f64>, _t: f64| -> Result<Vec<f64>> {
        let sol = solve_network_from(s[3], s[0], &post, params.x_f, guess)?;
        guess = sol.voltage;
        match dynamics {
            Dynamics::Truth(truth) => {
                Ok(truth_derivatives(&TruthState::from_slice(s), &sol.poi, truth)?.to_vec())
            }
            Dynamics::Representative(p) => {
                let st = GfmState::from_array([s[0], s[1], s[2], s[3]]);
                Ok(gfm_derivatives(&st, &sol.poi, p)?.to_array().to_vec())
            }
        }
    };
    let times = uniform_grid(0.0, dt, n);
    let states = ode_solve(&mut rhs, initial, &times, 1).map_err(wrap)?;

    let mut observations = Array2::zeros((n + 1, NUM_CHANNELS));
    let mut guess = PoiVoltage::flat(&post);
    for (i, s) in states.iter().enumerate() {
        let sol = solve_network_from(s[3], s[0], &post, params.x_f, guess).map_err(wrap)?;
        guess = sol.voltage;
        let row = [s[0], s[1], s[2], s[3], sol.poi.p, sol.poi.q];
        if row.iter().any(|v| !v.is_finite()) {
            return Err(wrap(Error::Model(format!("non-finite state at step {i}"))));
        }
        observations.row_mut(i).assign(&ndarray::ArrayView1::from(&row));
    }
    Ok(Trajectory {
        times,
        observations,
        load: load_step,
        seed,
    })
}
