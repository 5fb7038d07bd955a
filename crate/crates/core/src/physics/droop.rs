//! Droop-controlled GFM dynamics.
//!
//! State `[θ, ω, Vᵉ, V]`, inputs `(V_t, P, Q)` at the POI:
//!
//! ```text
//! dθ/dt   = ω_b (ω − ω_set)
//! T_p dω/dt = ω_set + m_p (P_set − P) − ω
//! dVᵉ/dt  = e_v,   e_v = V_set + m_q (Q_set − Q) − V_t
//! T_e dV/dt = k_pv e_v + k_iv Vᵉ − V
//! ```

use crate::error::{Error, Result};
use crate::numerics::Scalar;

use super::params::{GfmParams, GfmState, Poi, TruthModel};

/// Representative droop right-hand side, generic so it runs on tapes.
pub fn droop_rhs<T: Scalar>(state: [T; 4], poi: [T; 3], p: &GfmParams) -> [T; 4] {
    let [_theta, omega, v_err, v_int] = state;
    let [v_t, pe, qe] = poi;
    let d_theta = (omega - p.omega_set) * p.omega_b;
    let d_omega = (pe * (-p.m_p) + (p.omega_set + p.m_p * p.p_set) - omega) / p.t_p;
    let e_v = qe * (-p.m_q) + (p.v_set + p.m_q * p.q_set) - v_t;
    let d_v = (e_v * p.k_pv + v_err * p.k_iv - v_int) / p.t_e;
    [d_theta, d_omega, e_v, d_v]
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Contract(format!("non-finite dynamics input {values:?}")))
    }
}

pub fn gfm_derivatives(state: &GfmState, poi: &Poi, params: &GfmParams) -> Result<GfmState> {
    check_finite(&state.to_array())?;
    check_finite(&[poi.v_t, poi.p, poi.q])?;
    Ok(GfmState::from_array(droop_rhs(
        state.to_array(),
        [poi.v_t, poi.p, poi.q],
        params,
    )))
}

/// Truth state: the four shared states plus filtered `P` and `Q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthState {
    pub gfm: GfmState,
    pub p_meas: f64,
    pub q_meas: f64,
}

impl TruthState {
    pub fn to_vec(&self) -> Vec<f64> {
        let g = self.gfm.to_array();
        vec![g[0], g[1], g[2], g[3], self.p_meas, self.q_meas]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self {
            gfm: GfmState::from_array([s[0], s[1], s[2], s[3]]),
            p_meas: s[4],
            q_meas: s[5],
        }
    }
}

/// Ground-truth derivatives: droop laws driven by measurement-filtered
/// powers. With `t_m == 0` the filter is a pass-through and its states are
/// frozen.
pub fn truth_derivatives(state: &TruthState, poi: &Poi, truth: &TruthModel) -> Result<TruthState> {
    check_finite(&state.to_vec())?;
    check_finite(&[poi.v_t, poi.p, poi.q])?;
    let (p_used, q_used, dp, dq) = if truth.t_m > 0.0 {
        (
            state.p_meas,
            state.q_meas,
            (poi.p - state.p_meas) / truth.t_m,
            (poi.q - state.q_meas) / truth.t_m,
        )
    } else {
        (poi.p, poi.q, 0.0, 0.0)
    };
    let d = droop_rhs(state.gfm.to_array(), [poi.v_t, p_used, q_used], &truth.params);
    Ok(TruthState {
        gfm: GfmState::from_array(d),
        p_meas: dp,
        q_meas: dq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{ode_solve, uniform_grid, NumericsError};

    fn equilibrium(p: &GfmParams) -> (GfmState, Poi) {
        let v_int = 1.02;
        (
            GfmState {
                theta: 0.3,
                omega: p.omega_set,
                v_err: v_int / p.k_iv,
                v_int,
            },
            Poi {
                v_t: p.v_set,
                p: p.p_set,
                q: p.q_set,
            },
        )
    }

    #[test]
    fn vanishes_at_constructed_fixed_point() {
        let p = GfmParams::default();
        let (s, poi) = equilibrium(&p);
        let d = gfm_derivatives(&s, &poi, &p).unwrap();
        assert!(d.to_array().iter().all(|v| v.abs() < 1e-12), "{d:?}");
    }

    #[test]
    fn angle_rate_reads_frequency_offset() {
        let p = GfmParams::default();
        let (mut s, poi) = equilibrium(&p);
        s.omega += 0.01;
        let d = gfm_derivatives(&s, &poi, &p).unwrap();
        assert!((d.theta - 0.01 * p.omega_b).abs() < 1e-9);
    }

    #[test]
    fn frequency_rate_for_power_excess() {
        let p = GfmParams {
            m_p: 0.05,
            t_p: 0.05,
            ..Default::default()
        };
        let (s, mut poi) = equilibrium(&p);
        poi.p += 1.0;
        let d = gfm_derivatives(&s, &poi, &p).unwrap();
        // hand evaluation: (ω_set + m_p (P_set − P) − ω) / T_p
        let hand = (p.omega_set + 0.05 * (p.p_set - poi.p) - s.omega) / 0.05;
        assert!((hand + 1.0).abs() < 1e-12);
        assert!((d.omega - hand).abs() < 1e-12);
    }

    #[test]
    fn non_finite_input_is_contract_violation() {
        let p = GfmParams::default();
        let (mut s, poi) = equilibrium(&p);
        s.omega = f64::NAN;
        assert!(matches!(gfm_derivatives(&s, &poi, &p), Err(Error::Contract(_))));
    }

    #[test]
    fn zero_filter_constant_reduces_to_representative() {
        let truth = TruthModel {
            t_m: 0.0,
            ..Default::default()
        };
        let s = TruthState {
            gfm: GfmState {
                theta: 0.2,
                omega: 1.003,
                v_err: 0.11,
                v_int: 1.05,
            },
            p_meas: 123.0,
            q_meas: -4.0,
        };
        let poi = Poi {
            v_t: 0.98,
            p: 1.7,
            q: 0.2,
        };
        let d = truth_derivatives(&s, &poi, &truth).unwrap();
        let r = gfm_derivatives(&s.gfm, &poi, &truth.params).unwrap();
        assert_eq!(d.gfm, r);
        assert_eq!((d.p_meas, d.q_meas), (0.0, 0.0));
    }

    #[test]
    fn settled_filter_has_zero_rate() {
        let truth = TruthModel::default();
        let poi = Poi {
            v_t: 1.0,
            p: 1.4,
            q: -0.3,
        };
        let s = TruthState {
            gfm: GfmState {
                theta: 0.0,
                omega: 1.0,
                v_err: 0.1,
                v_int: 1.0,
            },
            p_meas: 1.4,
            q_meas: -0.3,
        };
        let d = truth_derivatives(&s, &poi, &truth).unwrap();
        assert_eq!((d.p_meas, d.q_meas), (0.0, 0.0));
    }

    #[test]
    fn filter_step_response_matches_first_order_lag() {
        let truth = TruthModel::default();
        let step = 2.5;
        let poi = Poi {
            v_t: 1.0,
            p: step,
            q: 0.0,
        };
        let mut f = |y: &Vec<f64>, _t: f64| -> std::result::Result<Vec<f64>, NumericsError> {
            let s = TruthState {
                gfm: GfmState::from_array([0.0, 1.0, 0.1, 1.0]),
                p_meas: y[0],
                q_meas: 0.0,
            };
            let d = truth_derivatives(&s, &poi, &truth).unwrap();
            Ok(vec![d.p_meas])
        };
        let times = uniform_grid(0.0, truth.t_m / 20.0, 20);
        let out = ode_solve(&mut f, vec![0.0], &times, 1).unwrap();
        let expected = step * (1.0 - (-1.0f64).exp());
        assert!((out[20][0] - expected).abs() < 1e-6);
    }
}
