//! Layers shared by the encoder and the recurrent baseline.

use rand::Rng;

use crate::numerics::{concat_cols, Activation, BoundParams, ParamSet, Var};

/// Registers a gated recurrent cell under `prefix`.
pub fn insert_gru<R: Rng>(ps: &mut ParamSet, prefix: &str, input: usize, hidden: usize, rng: &mut R) {
    ps.insert_dense(&format!("{prefix}.gates"), input + hidden, 2 * hidden, false, rng);
    ps.insert_dense(&format!("{prefix}.cand_x"), input, hidden, false, rng);
    ps.insert_dense(&format!("{prefix}.cand_h"), hidden, hidden, false, rng);
}

/// GRU update:
/// `r, u = σ(W[x, h] + b)`, `n = tanh(W_x x + b_x + r ⊙ (W_h h + b_h))`,
/// `h' = (1 − u) ⊙ n + u ⊙ h`.
pub fn gru_cell<'t>(bp: &BoundParams<'t>, prefix: &str, x: Var<'t>, h: Var<'t>) -> Var<'t> {
    let hidden = h.shape().1;
    let (wg, bg) = bp.dense(&format!("{prefix}.gates"));
    let gates = concat_cols(&[x, h]).dense(wg, bg, Activation::Identity).sigmoid();
    let reset = gates.cols(0, hidden);
    let update = gates.cols(hidden, 2 * hidden);
    let (wx, bx) = bp.dense(&format!("{prefix}.cand_x"));
    let (wh, bh) = bp.dense(&format!("{prefix}.cand_h"));
    let cand = (x.dense(wx, bx, Activation::Identity) + reset * h.dense(wh, bh, Activation::Identity)).tanh();
    cand + update * (h - cand)
}

/// `x → tanh(x W₁ + b₁) → · W₂ + b₂`.
pub fn mlp2<'t>(bp: &BoundParams<'t>, hidden: &str, out: &str, x: Var<'t>) -> Var<'t> {
    let (w1, b1) = bp.dense(hidden);
    let (w2, b2) = bp.dense(out);
    x.dense(w1, b1, Activation::Tanh).dense(w2, b2, Activation::Identity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tape;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_zero_input_stay_at_zero() {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        insert_gru(&mut ps, "g", 3, 4, &mut rng);
        for t in ps.tensors_mut() {
            t.fill(0.0);
        }
        let tape = Tape::new();
        let bp = ps.bind(&tape);
        let x = tape.constant(Array2::zeros((2, 3)));
        let h = tape.constant(Array2::zeros((2, 4)));
        let h1 = gru_cell(&bp, "g", x, h);
        assert!(h1.value().iter().all(|v| *v == 0.0));
    }
}
