//! Named trainable tensors.

use std::collections::HashMap;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Gradients, Tape, Tensor, Var};

/// Ordered collection of named weight arrays.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let name = name.into();
        match self.position(&name) {
            Some(i) => self.tensors[i] = value,
            None => {
                self.names.push(name);
                self.tensors.push(value);
            }
        }
    }

    /// Adds `{prefix}.w` (`fan_in × fan_out`) and `{prefix}.b` (`1 × fan_out`),
    /// uniform in ±1/√fan_in, or all zeros when `zero` is set.
    pub fn insert_dense<R: Rng>(
        &mut self,
        prefix: &str,
        fan_in: usize,
        fan_out: usize,
        zero: bool,
        rng: &mut R,
    ) {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut init = |rows, cols| {
            if zero {
                Array2::zeros((rows, cols))
            } else {
                Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-bound..bound))
            }
        };
        let w = init(fan_in, fan_out);
        let b = init(1, fan_out);
        self.insert(format!("{prefix}.w"), w);
        self.insert(format!("{prefix}.b"), b);
    }

    fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.position(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.position(name).map(|i| &mut self.tensors[i])
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Places every tensor on `tape` as a differentiable leaf.
    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundParams<'t> {
        let vars = self.tensors.iter().map(|t| tape.var(t.clone())).collect();
        BoundParams {
            index: self
                .names
                .iter()
                .enumerate()
                .map(|(i, n)| (n.clone(), i))
                .collect(),
            vars,
        }
    }

    /// Places every tensor on `tape` as a constant (inference only).
    pub fn bind_constant<'t>(&self, tape: &'t Tape) -> BoundParams<'t> {
        let vars = self.tensors.iter().map(|t| tape.constant(t.clone())).collect();
        BoundParams {
            index: self
                .names
                .iter()
                .enumerate()
                .map(|(i, n)| (n.clone(), i))
                .collect(),
            vars,
        }
    }
}

/// A [`ParamSet`] placed on a tape.
pub struct BoundParams<'t> {
    index: HashMap<String, usize>,
    vars: Vec<Var<'t>>,
}

impl<'t> BoundParams<'t> {
    pub fn var(&self, name: &str) -> Var<'t> {
        let i = *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        self.vars[i]
    }

    /// `(w, b)` for a dense layer registered under `prefix`.
    pub fn dense(&self, prefix: &str) -> (Var<'t>, Var<'t>) {
        (self.var(&format!("{prefix}.w")), self.var(&format!("{prefix}.b")))
    }

    pub fn vars(&self) -> &[Var<'t>] {
        &self.vars
    }

    /// Gradients in parameter order, zero-filled where absent.
    pub fn gradients(&self, grads: &Gradients) -> Vec<Tensor> {
        self.vars.iter().map(|v| grads.get_or_zeros(*v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dense_init_respects_fan_in_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = ParamSet::new();
        p.insert_dense("l", 16, 4, false, &mut rng);
        p.insert_dense("out", 4, 2, true, &mut rng);
        assert!(p.get("l.w").unwrap().iter().all(|v| v.abs() <= 0.25));
        assert!(p.get("out.w").unwrap().iter().all(|v| *v == 0.0));
        assert_eq!(p.names(), ["l.w", "l.b", "out.w", "out.b"]);
        assert_eq!(p.num_scalars(), 16 * 4 + 4 + 4 * 2 + 2);
    }

    #[test]
    fn insert_replaces_existing_entry() {
        let mut p = ParamSet::new();
        p.insert("a", Array2::zeros((1, 1)));
        p.insert("a", Array2::ones((2, 2)));
        assert_eq!(p.len(), 1);
        assert_eq!(p.get("a").unwrap().dim(), (2, 2));
    }
}
