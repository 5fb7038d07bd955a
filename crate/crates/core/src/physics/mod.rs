//! Grid-forming inverter physics: droop dynamics, the ground-truth
//! emulator, the POI network solve, and dataset generation.

pub mod dataset;
pub mod droop;
pub mod network;
pub mod params;
pub mod simulate;

pub use dataset::{generate_dataset, perturb_params, Dataset, GenerationConfig};
pub use droop::{droop_rhs, gfm_derivatives, truth_derivatives, TruthState};
pub use network::{network_closed_form, power_mismatch, solve_network, NetworkConstants, NetworkSolution, PoiVoltage};
pub use params::{GfmParams, GfmState, NetworkConfig, Poi, TruthModel};
pub use simulate::{simulate_event, simulate_with, steady_state, Dynamics, Trajectory, CHANNELS, NUM_CHANNELS};
