//! Bias-corrected Adam.

use serde::{Deserialize, Serialize};

use super::tape::Tensor;
use super::NumericsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
}

impl AdamState {
    /// Zeroed moments shaped like `params`, default betas and epsilon.
    pub fn new(params: &[Tensor], lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first_moment: params.iter().map(|p| Tensor::zeros(p.dim())).collect(),
            second_moment: params.iter().map(|p| Tensor::zeros(p.dim())).collect(),
        }
    }
}

/// One Adam step, updating `params` and `opt` in place.
pub fn adam_update(
    params: &mut [Tensor],
    grads: &[Tensor],
    opt: &mut AdamState,
) -> Result<(), NumericsError> {
    if params.len() != grads.len() || params.len() != opt.first_moment.len() {
        return Err(NumericsError::ShapeMismatch(format!(
            "{} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            opt.first_moment.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.dim() != g.dim() || p.dim() != opt.first_moment[i].dim() {
            return Err(NumericsError::ShapeMismatch(format!(
                "slot {i}: param {:?}, grad {:?}, moment {:?}",
                p.dim(),
                g.dim(),
                opt.first_moment[i].dim()
            )));
        }
    }
    if !(opt.lr > 0.0) {
        return Err(NumericsError::ShapeMismatch(format!(
            "learning rate must be positive, got {}",
            opt.lr
        )));
    }

    opt.step += 1;
    let (b1, b2, eps, lr) = (opt.beta1, opt.beta2, opt.eps, opt.lr);
    let bc1 = 1.0 - b1.powi(opt.step as i32);
    let bc2 = 1.0 - b2.powi(opt.step as i32);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(opt.first_moment.iter_mut().zip(opt.second_moment.iter_mut()))
    {
        ndarray::Zip::from(p)
            .and(g)
            .and(m)
            .and(v)
            .for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            });
    }
    Ok(())
}
