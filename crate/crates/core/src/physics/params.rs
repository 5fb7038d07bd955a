use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Droop and control constants of the grid-forming inverter, per unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GfmParams {
    /// P-ω droop gain.
    pub m_p: f64,
    /// Q-V droop gain.
    pub m_q: f64,
    /// Proportional gain of the voltage PI regulator.
    pub k_pv: f64,
    /// Integral gain of the voltage PI regulator, 1/s.
    pub k_iv: f64,
    /// Power/frequency filter time constant, s.
    pub t_p: f64,
    /// Internal-voltage actuation time constant, s.
    pub t_e: f64,
    /// Base angular frequency, rad/s.
    pub omega_b: f64,
    pub p_set: f64,
    pub q_set: f64,
    pub omega_set: f64,
    pub v_set: f64,
    /// Coupling reactance between internal EMF and the POI.
    pub x_f: f64,
}

impl Default for GfmParams {
    fn default() -> Self {
        Self {
            m_p: 0.05,
            m_q: 0.05,
            k_pv: 1.0,
            k_iv: 10.0,
            t_p: 0.01,
            t_e: 0.02,
            omega_b: 2.0 * std::f64::consts::PI * 60.0,
            p_set: 1.0,
            q_set: 0.0,
            omega_set: 1.0,
            v_set: 1.0,
            x_f: 0.1,
        }
    }
}

impl GfmParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m_p", self.m_p),
            ("m_q", self.m_q),
            ("k_pv", self.k_pv),
            ("k_iv", self.k_iv),
            ("t_p", self.t_p),
            ("t_e", self.t_e),
            ("omega_b", self.omega_b),
            ("x_f", self.x_f),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.omega_set - 1.0).abs().lt(&0.1) {
            return Err(Error::InvalidConfig(format!(
                "omega_set should be near 1 p.u., got {}",
                self.omega_set
            )));
        }
        if !(0.9..=1.1).contains(&self.v_set) {
            return Err(Error::InvalidConfig(format!(
                "v_set must lie in [0.9, 1.1], got {}",
                self.v_set
            )));
        }
        if !(self.p_set.is_finite() && self.q_set.is_finite()) {
            return Err(Error::InvalidConfig("non-finite power setpoint".into()));
        }
        Ok(())
    }
}

/// Ground-truth emulator: representative dynamics plus first-order P/Q
/// measurement filters that the representative model lacks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthModel {
    pub params: GfmParams,
    /// Measurement filter time constant, s. Zero makes the filter a pass-through.
    pub t_m: f64,
}

impl Default for TruthModel {
    fn default() -> Self {
        Self {
            params: GfmParams::default(),
            t_m: 0.02,
        }
    }
}

impl TruthModel {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.t_m >= 0.0) || !self.t_m.is_finite() {
            return Err(Error::InvalidConfig(format!("t_m must be >= 0, got {}", self.t_m)));
        }
        Ok(())
    }
}

/// GFM + constant-power load at the POI + infinite bus behind `x_line`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub x_line: f64,
    /// Infinite-bus voltage magnitude, angle zero.
    pub v_inf: f64,
    pub p_load: f64,
    pub q_load: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            x_line: 0.1,
            v_inf: 1.0,
            p_load: 1.0,
            q_load: 0.0,
        }
    }
}

impl NetworkConfig {
    pub fn with_load(self, p_load: f64) -> Self {
        Self { p_load, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_line > 0.0) {
            return Err(Error::InvalidConfig(format!("x_line must be positive, got {}", self.x_line)));
        }
        if !(self.v_inf > 0.0) {
            return Err(Error::InvalidConfig(format!("v_inf must be positive, got {}", self.v_inf)));
        }
        if !(self.p_load >= 0.0) {
            return Err(Error::InvalidConfig(format!("p_load must be >= 0, got {}", self.p_load)));
        }
        Ok(())
    }
}

/// Dynamic states shared by the representative and truth models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GfmState {
    /// Internal EMF angle, rad.
    pub theta: f64,
    /// Frequency, p.u.
    pub omega: f64,
    /// Integrated voltage error.
    pub v_err: f64,
    /// Internal voltage magnitude, p.u.
    pub v_int: f64,
}

impl GfmState {
    pub fn to_array(self) -> [f64; 4] {
        [self.theta, self.omega, self.v_err, self.v_int]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            theta: a[0],
            omega: a[1],
            v_err: a[2],
            v_int: a[3],
        }
    }
}

/// Quantities at the point of interconnection seen by the droop laws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub v_t: f64,
    pub p: f64,
    pub q: f64,
}
