//! Reverse-mode automatic differentiation over dense row-major matrices.

use alloc::vec;
use alloc::vec::Vec;


#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;
use super::Matrix;
use crate::error::{bail, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    /// `x * sigmoid(x)`.
    Silu,
    Tanh,
    Relu,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    Act(Var, Activation),
    Exp(Var),
    Softplus(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    Min(Var, Var),
    SliceCols(Var, usize),
    Assemble(Vec<(Var, usize)>),
    SumCols(Var),
    Sum(Var),
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
    /// SiLU keeps its sigmoid for the backward pass.
    aux: Option<Matrix>,
}

/// A single-use computation graph. Nodes are appended in evaluation order,
/// which is a topological order, so the backward pass walks them in reverse.
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients of a scalar with respect to every node that requires one.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// The gradient of `v`, or zeros shaped like `like` when `v` did not
    /// influence the loss.
    pub fn take_or_zeros(&mut self, v: Var, like: &Matrix) -> Matrix {
        self.grads[v.0].take().unwrap_or_else(|| Matrix::zeros(like.rows, like.cols))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Silu => x * sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// `y = f(x)`; SiLU derivatives come from the cached sigmoid instead.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Silu => silu_derivative(x, sigmoid(x)),
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

fn silu_derivative(x: f64, s: f64) -> f64 {
    s * (1.0 + x * (1.0 - s))
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// The 1x1 value of `v` as a scalar.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data[0]
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            aux: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A trainable input.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// An input that receives no gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MatMul(a, b), rg)
    }

    /// Adds the `1 x n` row `b` to every row of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Var {
        let (xv, bv) = (self.value(x), self.value(b));
        assert_eq!(bv.rows, 1, "add_row expects a single row");
        assert_eq!(xv.cols, bv.cols, "add_row width mismatch");
        let mut value = xv.clone();
        for row in value.data.chunks_mut(bv.cols) {
            row.iter_mut().zip(&bv.data).for_each(|(o, b)| *o += b);
        }
        let rg = self.rg(x) || self.rg(b);
        self.push(value, Op::AddRow(x, b), rg)
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!((av.rows, av.cols), (bv.rows, bv.cols), "elementwise shape mismatch");
        let data = av.data.iter().zip(&bv.data).map(|(x, y)| f(*x, *y)).collect();
        let value = Matrix::from_vec(av.rows, av.cols, data);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, op, rg)
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let av = self.value(a);
        let value = Matrix::from_vec(av.rows, av.cols, av.data.iter().map(|x| f(*x)).collect());
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise minimum; ties send the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, f64::min, Op::Min(a, b))
    }

    /// Multiplies row `i` of `x` by `c[i]`, where `c` is a column.
    pub fn mul_col(&mut self, x: Var, c: Var) -> Var {
        let (xv, cv) = (self.value(x), self.value(c));
        assert_eq!(cv.cols, 1, "mul_col expects a column");
        assert_eq!(xv.rows, cv.rows, "mul_col height mismatch");
        let mut value = xv.clone();
        for (row, k) in value.data.chunks_mut(xv.cols.max(1)).zip(&cv.data) {
            row.iter_mut().for_each(|o| *o *= k);
        }
        let rg = self.rg(x) || self.rg(c);
        self.push(value, Op::MulCol(x, c), rg)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.map(a, |x| x * k, Op::Scale(a, k))
    }

    pub fn activation(&mut self, a: Var, act: Activation) -> Var {
        if act != Activation::Silu {
            return self.map(a, |x| act.apply(x), Op::Act(a, act));
        }
        let av = self.value(a);
        let s = av.map(sigmoid);
        let value = av.zip(&s, |x, s| x * s);
        let rg = self.rg(a);
        let v = self.push(value, Op::Act(a, act), rg);
        self.nodes[v.0].aux = Some(s);
        v
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Tanh)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, f64::exp, Op::Exp(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.map(a, softplus, Op::Softplus(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map(a, |x| x * x, Op::Square(a))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.map(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let av = self.value(a);
        assert!(start + len <= av.cols, "column slice out of range");
        let mut data = Vec::with_capacity(av.rows * len);
        for row in av.data.chunks(av.cols) {
            data.extend_from_slice(&row[start..start + len]);
        }
        let value = Matrix::from_vec(av.rows, len, data);
        let rg = self.rg(a);
        self.push(value, Op::SliceCols(a, start), rg)
    }

    /// Copies `base` and overwrites column blocks with the given nodes, each
    /// written starting at its column offset.
    pub fn assemble(&mut self, base: Matrix, parts: &[(Var, usize)]) -> Var {
        let mut value = base;
        let cols = value.cols;
        let mut rg = false;
        for &(p, offset) in parts {
            let pv = &self.nodes[p.0].value;
            assert_eq!(pv.rows, value.rows, "assemble height mismatch");
            assert!(offset + pv.cols <= cols, "assemble column range out of bounds");
            for (dst, src) in value.data.chunks_mut(cols).zip(pv.data.chunks(pv.cols.max(1))) {
                dst[offset..offset + pv.cols].copy_from_slice(src);
            }
            rg |= self.nodes[p.0].requires_grad;
        }
        self.push(value, Op::Assemble(parts.to_vec()), rg)
    }

    /// Row sums as a column.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let data = av.data.chunks(av.cols.max(1)).map(|r| r.iter().sum()).collect();
        let value = Matrix::from_vec(av.rows, 1, data);
        let rg = self.rg(a);
        self.push(value, Op::SumCols(a), rg)
    }

    /// Sum of all entries as a 1x1 node.
    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data.iter().sum();
        let rg = self.rg(a);
        self.push(Matrix::from_vec(1, 1, vec![total]), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).data.len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Backpropagates from a 1x1 node. A tape supports a single backward pass.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            bail!(ContractViolation, "backward was already run on this tape");
        }
        let lv = &self.nodes[loss.0].value;
        if lv.rows != 1 || lv.cols != 1 {
            bail!(InvalidArgument, "loss must be a scalar, got {}x{}", lv.rows, lv.cols);
        }
        self.consumed = true;
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::from_vec(1, 1, vec![1.0]));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[i];
        let nodes = &self.nodes;
        let mut acc = |v: Var, delta: Matrix| {
            if !nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        let val = |v: Var| &nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if nodes[a.0].requires_grad {
                    acc(*a, g.matmul_transpose_b(val(*b)));
                }
                if nodes[b.0].requires_grad {
                    acc(*b, val(*a).transpose_a_matmul(g));
                }
            }
            Op::AddRow(x, b) => {
                acc(*x, g.clone());
                if nodes[b.0].requires_grad {
                    let mut db = Matrix::zeros(1, g.cols);
                    for row in g.data.chunks(g.cols) {
                        db.data.iter_mut().zip(row).for_each(|(o, r)| *o += r);
                    }
                    acc(*b, db);
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                if nodes[a.0].requires_grad {
                    acc(*a, g.zip(val(*b), |x, y| x * y));
                }
                if nodes[b.0].requires_grad {
                    acc(*b, g.zip(val(*a), |x, y| x * y));
                }
            }
            Op::Min(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let mut da = g.clone();
                let mut db = g.clone();
                for k in 0..g.data.len() {
                    if av.data[k] <= bv.data[k] {
                        db.data[k] = 0.0;
                    } else {
                        da.data[k] = 0.0;
                    }
                }
                acc(*a, da);
                acc(*b, db);
            }
            Op::MulCol(x, c) => {
                let (xv, cv) = (val(*x), val(*c));
                let cols = xv.cols.max(1);
                if nodes[x.0].requires_grad {
                    let mut dx = g.clone();
                    for (row, k) in dx.data.chunks_mut(cols).zip(&cv.data) {
                        row.iter_mut().for_each(|o| *o *= k);
                    }
                    acc(*x, dx);
                }
                if nodes[c.0].requires_grad {
                    let data = g
                        .data
                        .chunks(cols)
                        .zip(xv.data.chunks(cols))
                        .map(|(gr, xr)| gr.iter().zip(xr).map(|(p, q)| p * q).sum())
                        .collect();
                    acc(*c, Matrix::from_vec(cv.rows, 1, data));
                }
            }
            Op::Scale(a, k) => acc(*a, g.map(|x| x * k)),
            Op::Act(a, act) => {
                let (x, y) = (val(*a), &node.value);
                let mut d = g.clone();
                match (&node.aux, act) {
                    (Some(s), Activation::Silu) => {
                        for k in 0..d.data.len() {
                            d.data[k] *= silu_derivative(x.data[k], s.data[k]);
                        }
                    }
                    _ => {
                        for k in 0..d.data.len() {
                            d.data[k] *= act.derivative(x.data[k], y.data[k]);
                        }
                    }
                }
                acc(*a, d);
            }
            Op::Exp(a) => acc(*a, g.zip(&node.value, |x, y| x * y)),
            Op::Softplus(a) => acc(*a, g.zip(val(*a), |x, y| x * sigmoid(y))),
            Op::Square(a) => acc(*a, g.zip(val(*a), |x, y| 2.0 * x * y)),
            Op::Clamp(a, lo, hi) => acc(
                *a,
                g.zip(val(*a), |x, y| if y < *lo || y > *hi { 0.0 } else { x }),
            ),
            Op::SliceCols(a, start) => {
                let av = val(*a);
                let mut d = Matrix::zeros(av.rows, av.cols);
                for (dst, src) in d.data.chunks_mut(av.cols).zip(g.data.chunks(g.cols.max(1))) {
                    dst[*start..*start + g.cols].copy_from_slice(src);
                }
                acc(*a, d);
            }
            Op::Assemble(parts) => {
                for &(p, offset) in parts {
                    if !nodes[p.0].requires_grad {
                        continue;
                    }
                    let pv = val(p);
                    let mut d = Matrix::zeros(pv.rows, pv.cols);
                    for (dst, src) in d.data.chunks_mut(pv.cols.max(1)).zip(g.data.chunks(g.cols)) {
                        dst.copy_from_slice(&src[offset..offset + pv.cols]);
                    }
                    acc(p, d);
                }
            }
            Op::SumCols(a) => {
                let av = val(*a);
                let mut d = Matrix::zeros(av.rows, av.cols);
                for (row, k) in d.data.chunks_mut(av.cols.max(1)).zip(&g.data) {
                    row.iter_mut().for_each(|o| *o = *k);
                }
                acc(*a, d);
            }
            Op::Sum(a) => {
                let av = val(*a);
                acc(*a, Matrix::from_vec(av.rows, av.cols, vec![g.data[0]; av.data.len()]));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(x: f64) -> Matrix {
        Matrix::from_vec(1, 1, vec![x])
    }

    #[test]
    fn square_gradient() {
        let mut t = Tape::new();
        let w = t.param(scalar(3.0));
        let y = t.square(w);
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(w).unwrap().data[0], 6.0);
    }

    #[test]
    fn second_backward_fails() {
        let mut t = Tape::new();
        let w = t.param(scalar(1.0));
        let y = t.square(w);
        t.backward(y).unwrap();
        assert!(t.backward(y).is_err());
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut t = Tape::new();
        let w = t.param(Matrix::from_vec(1, 2, vec![1.0, 2.0]));
        assert!(matches!(t.backward(w), Err(crate::Error::InvalidArgument(_))));
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // y = w * w + w at w = 2 -> dy/dw = 2w + 1 = 5
        let mut t = Tape::new();
        let w = t.param(scalar(2.0));
        let sq = t.mul(w, w);
        let y = t.add(sq, w);
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(w).unwrap().data[0], 5.0);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut t = Tape::new();
        let c = t.constant(scalar(2.0));
        let w = t.param(scalar(3.0));
        let y = t.mul(c, w);
        let g = t.backward(y).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(w).unwrap().data[0], 2.0);
    }

    #[test]
    fn assemble_routes_column_gradients() {
        let mut t = Tape::new();
        let p = t.param(Matrix::from_vec(2, 1, vec![1.0, 2.0]));
        let x = t.assemble(Matrix::from_vec(2, 3, vec![5.0; 6]), &[(p, 1)]);
        assert_eq!(t.value(x).data, vec![5.0, 1.0, 5.0, 5.0, 2.0, 5.0]);
        let sq = t.square(x);
        let s = t.sum(sq);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(p).unwrap().data, vec![2.0, 4.0]);
    }
}
