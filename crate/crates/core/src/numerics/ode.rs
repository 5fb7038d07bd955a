//! Fixed-step classical Runge–Kutta integration.
//!
//! The integrator is generic over [`OdeState`] so the same stepping code
//! drives plain `f64` simulation and taped (differentiable) rollouts. On a
//! tape, gradients flow through the unrolled stages.

use super::tape::Var;
use super::NumericsError;

/// State that supports the `y + a·x` update RK4 needs.
pub trait OdeState: Clone {
    fn axpy(&self, a: f64, x: &Self) -> Self;
    fn is_finite(&self) -> bool;
}

impl OdeState for Vec<f64> {
    fn axpy(&self, a: f64, x: &Self) -> Self {
        assert_eq!(self.len(), x.len(), "state dimension mismatch");
        self.iter().zip(x).map(|(y, x)| y + a * x).collect()
    }

    fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

impl<'t> OdeState for Var<'t> {
    fn axpy(&self, a: f64, x: &Self) -> Self {
        *self + x.scale(a)
    }

    fn is_finite(&self) -> bool {
        Var::is_finite(self)
    }
}

/// An initial-value problem sampled at a strictly increasing time grid.
pub struct OdeProblem<S, F> {
    pub dynamics: F,
    pub initial_state: S,
    pub times: Vec<f64>,
}

impl<S, F, E> OdeProblem<S, F>
where
    S: OdeState,
    F: FnMut(&S, f64) -> Result<S, E>,
    E: From<NumericsError>,
{
    pub fn new(dynamics: F, initial_state: S, times: Vec<f64>) -> Result<Self, NumericsError> {
        validate_times(&times)?;
        Ok(Self {
            dynamics,
            initial_state,
            times,
        })
    }

    /// States at every grid time, `substeps` RK4 steps per interval.
    pub fn solve(mut self, substeps: usize) -> Result<Vec<S>, E> {
        ode_solve(&mut self.dynamics, self.initial_state, &self.times, substeps)
    }
}

pub fn validate_times(times: &[f64]) -> Result<(), NumericsError> {
    if times.len() < 2 {
        return Err(NumericsError::InvalidTimes(format!(
            "need at least 2 times, got {}",
            times.len()
        )));
    }
    if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(NumericsError::InvalidTimes(format!(
            "times must be strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// One classical RK4 step of size `h` from `(state, t)`.
pub fn rk4_step<S, F, E>(dynamics: &mut F, state: &S, t: f64, h: f64) -> Result<S, E>
where
    S: OdeState,
    F: FnMut(&S, f64) -> Result<S, E>,
    E: From<NumericsError>,
{
    if !(h > 0.0) {
        return Err(NumericsError::InvalidStep(h).into());
    }
    let mut eval = |s: &S, time: f64| -> Result<S, E> {
        let d = dynamics(s, time)?;
        if !d.is_finite() {
            return Err(NumericsError::NonFinite { time }.into());
        }
        Ok(d)
    };
    let k1 = eval(state, t)?;
    let k2 = eval(&state.axpy(0.5 * h, &k1), t + 0.5 * h)?;
    let k3 = eval(&state.axpy(0.5 * h, &k2), t + 0.5 * h)?;
    let k4 = eval(&state.axpy(h, &k3), t + h)?;
    Ok(state
        .axpy(h / 6.0, &k1)
        .axpy(h / 3.0, &k2)
        .axpy(h / 3.0, &k3)
        .axpy(h / 6.0, &k4))
}

/// Integrates across `times`, returning the state at each entry.
///
/// A single-entry grid returns just the initial state.
pub fn ode_solve<S, F, E>(
    dynamics: &mut F,
    initial: S,
    times: &[f64],
    substeps: usize,
) -> Result<Vec<S>, E>
where
    S: OdeState,
    F: FnMut(&S, f64) -> Result<S, E>,
    E: From<NumericsError>,
{
    if times.is_empty() {
        return Err(NumericsError::InvalidTimes("empty time grid".into()).into());
    }
    if times.len() > 1 {
        validate_times(times)?;
    }
    let substeps = substeps.max(1);
    let mut out = Vec::with_capacity(times.len());
    out.push(initial);
    for (step, w) in times.windows(2).enumerate() {
        let h = (w[1] - w[0]) / substeps as f64;
        let mut state = out.last().expect("non-empty").clone();
        for k in 0..substeps {
            let t = w[0] + k as f64 * h;
            state = rk4_step(dynamics, &state, t, h).map_err(|e: E| e)?;
        }
        if !state.is_finite() {
            return Err(NumericsError::StepFailed {
                step,
                time: w[1],
            }
            .into());
        }
        out.push(state);
    }
    Ok(out)
}

/// Uniform grid `t0, t0 + dt, …` with `n + 1` points.
pub fn uniform_grid(t0: f64, dt: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| t0 + i as f64 * dt).collect()
}
