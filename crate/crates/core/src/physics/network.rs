//! Algebraic POI network: GFM behind `x_f`, constant-power load at the
//! POI, infinite bus behind `x_line`.

use crate::error::{Error, Result};
use crate::numerics::Scalar;

use super::params::{NetworkConfig, Poi};

const MAX_ITERATIONS: usize = 50;
const TOLERANCE: f64 = 1e-12;

/// Complex POI voltage in rectangular form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoiVoltage {
    pub re: f64,
    pub im: f64,
}

impl PoiVoltage {
    pub fn flat(net: &NetworkConfig) -> Self {
        Self {
            re: net.v_inf,
            im: 0.0,
        }
    }

    pub fn magnitude(&self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn angle(&self) -> f64 {
        self.im.atan2(self.re)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkSolution {
    pub poi: Poi,
    pub voltage: PoiVoltage,
    pub residual: f64,
    pub iterations: usize,
}

/// Nodal complex power mismatch at the POI: power in from the GFM branch,
/// minus load, minus power out to the infinite bus.
pub fn power_mismatch(e: f64, theta: f64, v: PoiVoltage, net: &NetworkConfig, x_f: f64) -> [f64; 2] {
    let (er, ei) = (e * theta.cos(), e * theta.sin());
    let ar = ei / x_f;
    let ai = er / x_f + net.v_inf / net.x_line;
    let b_sum = 1.0 / x_f + 1.0 / net.x_line;
    let (x, y) = (v.re, v.im);
    [
        x * ar - y * ai - net.p_load,
        x * ai + y * ar - b_sum * (x * x + y * y) - net.q_load,
    ]
}

/// Power delivered by the GFM at its internal EMF for a given POI voltage.
pub fn gfm_power(e: f64, theta: f64, v: PoiVoltage, x_f: f64) -> (f64, f64) {
    let (er, ei) = (e * theta.cos(), e * theta.sin());
    let p = (ei * v.re - er * v.im) / x_f;
    let q = (e * e - (er * v.re + ei * v.im)) / x_f;
    (p, q)
}

/// Newton–Raphson solve from a flat start.
pub fn solve_network(e: f64, theta: f64, net: &NetworkConfig, x_f: f64) -> Result<NetworkSolution> {
    solve_network_from(e, theta, net, x_f, PoiVoltage::flat(net))
}

/// Newton–Raphson solve from an explicit initial guess.
pub fn solve_network_from(
    e: f64,
    theta: f64,
    net: &NetworkConfig,
    x_f: f64,
    guess: PoiVoltage,
) -> Result<NetworkSolution> {
    if !(e > 0.0) || !theta.is_finite() {
        return Err(Error::Contract(format!(
            "network solve needs E > 0 and finite angle, got E = {e}, θ = {theta}"
        )));
    }
    let (er, ei) = (e * theta.cos(), e * theta.sin());
    let ar = ei / x_f;
    let ai = er / x_f + net.v_inf / net.x_line;
    let b_sum = 1.0 / x_f + 1.0 / net.x_line;

    let mut v = guess;
    let mut residual = f64::INFINITY;
    for iteration in 0..=MAX_ITERATIONS {
        let [f_re, f_im] = power_mismatch(e, theta, v, net, x_f);
        residual = f_re.hypot(f_im);
        if !residual.is_finite() {
            break;
        }
        if residual < TOLERANCE {
            let (p, q) = gfm_power(e, theta, v, x_f);
            return Ok(NetworkSolution {
                poi: Poi {
                    v_t: v.magnitude(),
                    p,
                    q,
                },
                voltage: v,
                residual,
                iterations: iteration,
            });
        }
        if iteration == MAX_ITERATIONS {
            break;
        }
        let j11 = ar;
        let j12 = -ai;
        let j21 = ai - 2.0 * b_sum * v.re;
        let j22 = ar - 2.0 * b_sum * v.im;
        let det = j11 * j22 - j12 * j21;
        if det.abs() < 1e-300 {
            break;
        }
        let dx = (j22 * f_re - j12 * f_im) / det;
        let dy = (-j21 * f_re + j11 * f_im) / det;
        v.re -= dx;
        v.im -= dy;
    }
    Err(Error::NetworkNonConvergence {
        iterations: MAX_ITERATIONS,
        residual,
    })
}

/// Fixed network constants for the closed-form evaluation.
#[derive(Debug, Clone, Copy)]
pub struct NetworkConstants {
    pub x_f: f64,
    pub x_line: f64,
    pub v_inf: f64,
    pub q_load: f64,
}

impl NetworkConstants {
    pub fn new(net: &NetworkConfig, x_f: f64) -> Self {
        Self {
            x_f,
            x_line: net.x_line,
            v_inf: net.v_inf,
            q_load: net.q_load,
        }
    }
}

/// High-voltage closed-form solution of the same network via its Thevenin
/// equivalent, written against [`Scalar`] so it can sit inside a taped
/// model. Returns `[V_t, P, Q]`.
pub fn network_closed_form<T: Scalar>(e: T, theta: T, p_load: T, c: &NetworkConstants) -> [T; 3] {
    let x_sum = c.x_f + c.x_line;
    let a = c.x_line / x_sum;
    let b = c.x_f / x_sum * c.v_inf;
    let x_th = c.x_f * c.x_line / x_sum;

    let er = e * theta.cos();
    let ei = e * theta.sin();
    let vth_re = er * a + b;
    let vth_im = ei * a;
    let m2 = vth_re * vth_re + vth_im * vth_im;

    let lin = m2 - 2.0 * x_th * c.q_load;
    let disc = lin * lin - (p_load * p_load + c.q_load * c.q_load) * (4.0 * x_th * x_th);
    let u = (lin + disc.sqrt()) * 0.5;
    let big_a = u + x_th * c.q_load;
    let big_b = p_load * x_th;
    let v_re = (big_a * vth_re + big_b * vth_im) / m2;
    let v_im = (big_a * vth_im - big_b * vth_re) / m2;

    let v_t = u.sqrt();
    let p = (ei * v_re - er * v_im) / c.x_f;
    let q = (e * e - (er * v_re + ei * v_im)) / c.x_f;
    [v_t, p, q]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(p_load: f64) -> NetworkConfig {
        NetworkConfig::default().with_load(p_load)
    }

    #[test]
    fn no_load_no_flow() {
        let sol = solve_network(1.0, 0.0, &net(0.0), 0.1).unwrap();
        assert!((sol.poi.v_t - 1.0).abs() < 1e-12);
        assert!(sol.poi.p.abs() < 1e-12 && sol.poi.q.abs() < 1e-12);
    }

    #[test]
    fn converged_solution_has_small_mismatch() {
        let n = net(2.3);
        let sol = solve_network(1.05, 0.2, &n, 0.1).unwrap();
        let [r, i] = power_mismatch(1.05, 0.2, sol.voltage, &n, 0.1);
        assert!(r.hypot(i) < 1e-10);
    }

    #[test]
    fn closed_form_agrees_with_newton() {
        for &(e, th, load) in &[(1.0, 0.1, 1.0), (1.08, 0.35, 4.5), (0.97, -0.2, 0.5)] {
            let n = NetworkConfig {
                q_load: 0.2,
                ..net(load)
            };
            let sol = solve_network(e, th, &n, 0.1).unwrap();
            let [v, p, q] = network_closed_form(e, th, load, &NetworkConstants::new(&n, 0.1));
            assert!((v - sol.poi.v_t).abs() < 1e-10);
            assert!((p - sol.poi.p).abs() < 1e-10);
            assert!((q - sol.poi.q).abs() < 1e-10);
        }
    }

    #[test]
    fn infeasible_load_does_not_converge() {
        let err = solve_network(1.0, 0.0, &net(40.0), 0.1).unwrap_err();
        assert!(matches!(err, Error::NetworkNonConvergence { .. }));
    }

    #[test]
    fn rejects_non_positive_emf() {
        assert!(matches!(
            solve_network(0.0, 0.0, &net(1.0), 0.1),
            Err(Error::Contract(_))
        ));
    }
}
