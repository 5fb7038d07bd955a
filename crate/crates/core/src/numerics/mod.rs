//! Differentiation, integration and optimization substrate.

pub mod adam;
pub mod gradcheck;
pub mod ode;
pub mod params;
pub mod scalar;
pub mod tape;

pub use adam::{adam_update, AdamState};
pub use ode::{ode_solve, rk4_step, uniform_grid, OdeProblem, OdeState};
pub use params::{BoundParams, ParamSet};
pub use scalar::Scalar;
pub use tape::{concat_cols, Activation, Gradients, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericsError {
    #[error("backward requires a scalar output, got shape {shape:?}")]
    NonScalarOutput { shape: (usize, usize) },
    #[error("non-finite derivative at t = {time}")]
    NonFinite { time: f64 },
    #[error("integration failed at step {step} (t = {time})")]
    StepFailed { step: usize, time: f64 },
    #[error("step size must be positive, got {0}")]
    InvalidStep(f64),
    #[error("invalid time grid: {0}")]
    InvalidTimes(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}
