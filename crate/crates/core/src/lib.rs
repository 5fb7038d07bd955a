//! Physics-informed latent neural ODE emulation of a black-box
//! grid-forming inverter.

pub mod batch;
pub mod error;
pub mod nn;
pub mod normalize;
pub mod numerics;
pub mod physics;
pub mod pilnm;
pub mod pipeline;
pub mod rnn;

pub use error::{Error, Result};
