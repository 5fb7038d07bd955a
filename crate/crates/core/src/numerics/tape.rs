//! Tape-based reverse-mode automatic differentiation over 2-D `f64` tensors.
//!
//! Every value on the tape is an `Array2<f64>`. Row vectors (`1 × n`),
//! column vectors (`m × 1`) and scalars (`1 × 1`) broadcast against full
//! matrices in the elementwise binary ops, numpy style. Batched model code
//! keeps the batch on the row axis and features on the column axis.
//!
//! ```
//! use pilnm_core::numerics::Tape;
//!
//! let tape = Tape::new();
//! let a = tape.scalar(2.0);
//! let b = tape.scalar(3.0);
//! let f = a * b;
//! let grads = tape.backward(f).unwrap();
//! assert_eq!(grads.scalar(a), 3.0);
//! assert_eq!(grads.scalar(b), 2.0);
//! ```

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use ndarray::{s, Array2, Axis, Zip};

use super::NumericsError;

pub type Tensor = Array2<f64>;

/// Activation fused into a [`Var::dense`] node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    Offset(usize),
    MatMul(usize, usize),
    Dense {
        x: usize,
        w: usize,
        b: usize,
        act: Activation,
    },
    Tanh(usize),
    Sigmoid(usize),
    Exp(usize),
    Log(usize),
    Sqrt(usize),
    Sin(usize),
    Cos(usize),
    Softplus(usize),
    Square(usize),
    Sum(usize),
    SumRows(usize),
    SliceCols {
        src: usize,
        start: usize,
    },
    ConcatCols(Vec<usize>),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records operations for a single forward pass.
///
/// Graphs are single-threaded; build one tape per training step (or per
/// independent evaluation) and drop it afterwards.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (r, c) = self.shape();
        write!(f, "Var#{}({}x{})", self.id, r, c)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::with_capacity(1024)),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, needs_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Differentiable input.
    pub fn var(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient (data, fixed coefficients).
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.var(Array2::from_elem((1, 1), value))
    }

    pub fn scalar_constant(&self, value: f64) -> Var<'_> {
        self.constant(Array2::from_elem((1, 1), value))
    }

    fn needs(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].needs_grad)
    }

    fn unary(&self, a: usize, op: Op, f: impl Fn(f64) -> f64) -> Var<'_> {
        let value = self.nodes.borrow()[a].value.mapv(f);
        let needs = self.needs(&[a]);
        self.push(value, op, needs)
    }

    fn binary(&self, a: usize, b: usize, op: Op, f: impl Fn(f64, f64) -> f64) -> Var<'_> {
        let value = {
            let nodes = self.nodes.borrow();
            broadcast_zip(&nodes[a].value, &nodes[b].value, f)
        };
        let needs = self.needs(&[a, b]);
        self.push(value, op, needs)
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var<'_>) -> Result<Gradients, NumericsError> {
        let nodes = self.nodes.borrow();
        let out = &nodes[output.id];
        if out.value.dim() != (1, 1) {
            return Err(NumericsError::NonScalarOutput {
                shape: out.value.dim(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.id + 1];
        grads[output.id] = Some(Array2::ones((1, 1)));

        for id in (0..=output.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.needs_grad {
                continue;
            }
            let val = &node.value;
            let value_of = |i: usize| &nodes[i].value;
            let mut acc = |target: usize, contrib: Tensor| {
                if !nodes[target].needs_grad {
                    return;
                }
                let contrib = reduce_to(contrib, nodes[target].value.dim());
                match &mut grads[target] {
                    Some(existing) => *existing += &contrib,
                    slot @ None => *slot = Some(contrib),
                }
            };
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Sub(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, -g);
                }
                Op::Mul(a, b) => {
                    acc(*a, broadcast_zip(&g, value_of(*b), |g, y| g * y));
                    acc(*b, broadcast_zip(&g, value_of(*a), |g, x| g * x));
                }
                Op::Div(a, b) => {
                    acc(*a, broadcast_zip(&g, value_of(*b), |g, y| g / y));
                    // d(a/b)/db = -(a/b)/b
                    let ratio_over_b = broadcast_zip(val, value_of(*b), |q, y| q / y);
                    acc(*b, broadcast_zip(&g, &ratio_over_b, |g, r| -g * r));
                }
                Op::Neg(a) => acc(*a, -g),
                Op::Scale(a, k) => acc(*a, g * *k),
                Op::Offset(a) => acc(*a, g),
                Op::MatMul(a, b) => {
                    acc(*a, g.dot(&value_of(*b).t()));
                    acc(*b, value_of(*a).t().dot(&g));
                }
                Op::Dense { x, w, b, act } => {
                    let mut gz = g;
                    if *act == Activation::Tanh {
                        Zip::from(&mut gz).and(val).for_each(|g, &y| *g *= 1.0 - y * y);
                    }
                    if nodes[*x].needs_grad {
                        acc(*x, gz.dot(&value_of(*w).t()));
                    }
                    if nodes[*w].needs_grad {
                        acc(*w, value_of(*x).t().dot(&gz));
                    }
                    acc(*b, gz);
                }
                Op::Tanh(a) => acc(*a, zip_map(g, val, |g, y| g * (1.0 - y * y))),
                Op::Sigmoid(a) => acc(*a, zip_map(g, val, |g, y| g * y * (1.0 - y))),
                Op::Exp(a) => acc(*a, zip_map(g, val, |g, y| g * y)),
                Op::Log(a) => acc(*a, zip_map(g, value_of(*a), |g, x| g / x)),
                Op::Sqrt(a) => acc(*a, zip_map(g, val, |g, y| 0.5 * g / y)),
                Op::Sin(a) => acc(*a, zip_map(g, value_of(*a), |g, x| g * x.cos())),
                Op::Cos(a) => acc(*a, zip_map(g, value_of(*a), |g, x| -g * x.sin())),
                Op::Softplus(a) => acc(*a, zip_map(g, value_of(*a), |g, x| g * sigmoid(x))),
                Op::Square(a) => acc(*a, zip_map(g, value_of(*a), |g, x| 2.0 * g * x)),
                Op::Sum(a) => {
                    let dim = value_of(*a).dim();
                    acc(*a, Array2::from_elem(dim, g[[0, 0]]));
                }
                Op::SumRows(a) => {
                    let dim = value_of(*a).dim();
                    acc(*a, g.broadcast(dim).expect("row gradient").to_owned());
                }
                Op::SliceCols { src, start } => {
                    let dim = value_of(*src).dim();
                    if nodes[*src].needs_grad {
                        let mut full = Array2::zeros(dim);
                        full.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                        acc(*src, full);
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let width = value_of(p).ncols();
                        if nodes[p].needs_grad {
                            acc(p, g.slice(s![.., offset..offset + width]).to_owned());
                        }
                        offset += width;
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// `tanh` through a single `exp`; absolute error stays at rounding level and
/// it is several times cheaper than the libm routine.
#[inline]
pub fn tanh(x: f64) -> f64 {
    if x.is_nan() {
        return x;
    }
    let e = (-2.0 * x.abs()).exp();
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

/// Gradients of a scalar output with respect to tape nodes.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of `v`; `None` when the output does not depend on it or it
    /// was created as a constant.
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, zero-filled when absent.
    pub fn get_or_zeros(&self, v: Var<'_>) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Array2::zeros(v.shape()))
    }

    pub fn scalar(&self, v: Var<'_>) -> f64 {
        self.get(v).map(|g| g[[0, 0]]).unwrap_or(0.0)
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }
}

fn zip_map(mut g: Tensor, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Zip::from(&mut g).and(other).for_each(|o, &y| *o = f(*o, y));
    g
}

fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> (usize, usize) {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            x
        } else if x == 1 {
            y
        } else {
            panic!("incompatible shapes {a:?} and {b:?}")
        }
    };
    (dim(a.0, b.0), dim(a.1, b.1))
}

fn broadcast_zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    if a.dim() == b.dim() {
        let mut out = a.clone();
        Zip::from(&mut out).and(b).for_each(|o, &y| *o = f(*o, y));
        return out;
    }
    let shape = broadcast_shape(a.dim(), b.dim());
    let av = a.broadcast(shape).expect("broadcast lhs");
    let bv = b.broadcast(shape).expect("broadcast rhs");
    Zip::from(&av).and(&bv).map_collect(|&x, &y| f(x, y))
}

/// Sum a broadcast gradient back down to the parent's shape.
fn reduce_to(mut g: Tensor, dim: (usize, usize)) -> Tensor {
    if g.dim() == dim {
        return g;
    }
    if dim.0 == 1 && g.nrows() != 1 {
        g = g.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if dim.1 == 1 && g.ncols() != 1 {
        g = g.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    debug_assert_eq!(g.dim(), dim);
    g
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Tensor {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    /// Borrowing accessor for the forward value.
    pub fn with_value<R>(&self, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.tape.nodes.borrow()[self.id].value)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.nodes.borrow()[self.id].value.dim()
    }

    /// First element; intended for `1 × 1` results.
    pub fn item(&self) -> f64 {
        self.tape.nodes.borrow()[self.id].value[[0, 0]]
    }

    pub fn is_finite(&self) -> bool {
        self.with_value(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn matmul(self, rhs: Var<'t>) -> Var<'t> {
        let value = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.id].value.dot(&nodes[rhs.id].value)
        };
        let needs = self.tape.needs(&[self.id, rhs.id]);
        self.tape.push(value, Op::MatMul(self.id, rhs.id), needs)
    }

    /// `act(self · w + b)` as a single node; `b` is a `1 × n` row.
    pub fn dense(self, w: Var<'t>, b: Var<'t>, act: Activation) -> Var<'t> {
        let value = {
            let nodes = self.tape.nodes.borrow();
            let mut z = nodes[self.id].value.dot(&nodes[w.id].value);
            z += &nodes[b.id].value;
            if act == Activation::Tanh {
                z.mapv_inplace(tanh);
            }
            z
        };
        let needs = self.tape.needs(&[self.id, w.id, b.id]);
        self.tape.push(
            value,
            Op::Dense {
                x: self.id,
                w: w.id,
                b: b.id,
                act,
            },
            needs,
        )
    }

    pub fn tanh(self) -> Var<'t> {
        self.tape.unary(self.id, Op::Tanh(self.id), tanh)
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.tape.unary(self.id, Op::Sigmoid(self.id), sigmoid)
    }

    pub fn exp(self) -> Var<'t> {
        self.tape.unary(self.id, Op::Exp(self.id), f64::exp)
    }

    pub fn ln(self) -> Var<'t> {
        self.tape.unary(self.id, Op::Log(self.id), f64::ln)
    }

    pub fn sqrt(self) -> Var<'t> {
        self.tape.unary(self.id, Op::Sqrt(self.id), f64::sqrt)
    }

    pub fn sin(self) -> Var<'t> {
        self.tape.unary(self.id, Op::Sin(self.id), f64::sin)
    }

    pub fn cos(self) -> Var<'t> {
        self.tape.unary(self.id, Op::Cos(self.id), f64::cos)
    }

    pub fn softplus(self) -> Var<'t> {
        self.tape.unary(self.id, Op::Softplus(self.id), softplus)
    }

    pub fn square(self) -> Var<'t> {
        self.tape.unary(self.id, Op::Square(self.id), |x| x * x)
    }

    pub fn scale(self, k: f64) -> Var<'t> {
        self.tape.unary(self.id, Op::Scale(self.id, k), |x| x * k)
    }

    pub fn offset(self, c: f64) -> Var<'t> {
        self.tape.unary(self.id, Op::Offset(self.id), |x| x + c)
    }

    /// Sum of all entries, `1 × 1`.
    pub fn sum(self) -> Var<'t> {
        let value = self.with_value(|v| Array2::from_elem((1, 1), v.sum()));
        let needs = self.tape.needs(&[self.id]);
        self.tape.push(value, Op::Sum(self.id), needs)
    }

    /// Column sums over the row (batch) axis, `1 × n`.
    pub fn sum_rows(self) -> Var<'t> {
        let value = self.with_value(|v| v.sum_axis(Axis(0)).insert_axis(Axis(0)));
        let needs = self.tape.needs(&[self.id]);
        self.tape.push(value, Op::SumRows(self.id), needs)
    }

    pub fn mean(self) -> Var<'t> {
        let n = self.with_value(|v| v.len()) as f64;
        self.sum().scale(1.0 / n)
    }

    /// Columns `start..end`.
    pub fn cols(self, start: usize, end: usize) -> Var<'t> {
        let value = self.with_value(|v| v.slice(s![.., start..end]).to_owned());
        let needs = self.tape.needs(&[self.id]);
        self.tape.push(
            value,
            Op::SliceCols {
                src: self.id,
                start,
            },
            needs,
        )
    }

    pub fn col(self, j: usize) -> Var<'t> {
        self.cols(j, j + 1)
    }
}

/// Horizontal concatenation of equally tall blocks.
pub fn concat_cols<'t>(parts: &[Var<'t>]) -> Var<'t> {
    assert!(!parts.is_empty(), "concat of zero blocks");
    let tape = parts[0].tape;
    let value = {
        let nodes = tape.nodes.borrow();
        let views: Vec<_> = parts.iter().map(|p| nodes[p.id].value.view()).collect();
        ndarray::concatenate(Axis(1), &views).expect("concat rows must agree")
    };
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    let needs = tape.needs(&ids);
    tape.push(value, Op::ConcatCols(ids), needs)
}

macro_rules! binary_impl {
    ($trait:ident, $method:ident, $op:ident, $f:expr) => {
        impl<'t> $trait<Var<'t>> for Var<'t> {
            type Output = Var<'t>;
            fn $method(self, rhs: Var<'t>) -> Var<'t> {
                self.tape.binary(self.id, rhs.id, Op::$op(self.id, rhs.id), $f)
            }
        }
    };
}

binary_impl!(Add, add, Add, |a, b| a + b);
binary_impl!(Sub, sub, Sub, |a, b| a - b);
binary_impl!(Mul, mul, Mul, |a, b| a * b);
binary_impl!(Div, div, Div, |a, b| a / b);

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.tape.unary(self.id, Op::Neg(self.id), |x| -x)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        self.offset(rhs)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Var<'t> {
        self.offset(-rhs)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self.scale(rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Var<'t> {
        self.scale(1.0 / rhs)
    }
}

impl<'t> Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        rhs.offset(self)
    }
}

impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        (-rhs).offset(self)
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        rhs.scale(self)
    }
}
