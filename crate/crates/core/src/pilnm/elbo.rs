//! Closed-form pieces of the evidence lower bound.

use serde::{Deserialize, Serialize};

/// Diagnostics of one ELBO evaluation, batch-averaged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElboMetrics {
    /// Negative ELBO.
    pub loss: f64,
    /// Mean squared normalized reconstruction error.
    pub reconstruction_mse: f64,
    pub kl: f64,
    pub log_likelihood: f64,
}

/// `KL(N(μ, diag σ²) ‖ N(0, I))`.
pub fn gaussian_kl(mu: &[f64], sigma: &[f64]) -> f64 {
    mu.iter()
        .zip(sigma)
        .map(|(m, s)| 0.5 * (s * s + m * m - 1.0 - (s * s).ln()))
        .sum()
}

/// `Σ log N(x | x̂, σ²)` with a shared scale.
pub fn gaussian_log_likelihood(x: &[f64], x_hat: &[f64], sigma: f64) -> f64 {
    let norm = -(sigma * (2.0 * std::f64::consts::PI).sqrt()).ln();
    x.iter()
        .zip(x_hat)
        .map(|(a, b)| norm - 0.5 * ((a - b) / sigma).powi(2))
        .sum()
}
