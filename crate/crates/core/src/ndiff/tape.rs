use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::axpy;
use crate::scalar::Scalar;

use super::tensor::Tensor;

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    idx: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.idx
    }
}

/// Elementwise activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    /// Leaky ReLU with negative slope 0.01.
    LeakyRelu,
    Tanh,
    Sin,
    Cos,
    Square,
    Exp,
    Sinh,
}

pub const LEAKY_SLOPE: f64 = 0.01;

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Identity => x,
            Activation::Relu => {
                if x > T::zero() {
                    x
                } else {
                    T::zero()
                }
            }
            Activation::LeakyRelu => {
                if x > T::zero() {
                    x
                } else {
                    x * T::lit(LEAKY_SLOPE)
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sin => x.sin(),
            Activation::Cos => x.cos(),
            Activation::Square => x * x,
            Activation::Exp => x.exp(),
            Activation::Sinh => x.sinh(),
        }
    }

    /// Derivative at the pre-activation `x`.
    #[inline]
    pub fn derivative<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::LeakyRelu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::lit(LEAKY_SLOPE)
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                T::one() - t * t
            }
            Activation::Sin => x.cos(),
            Activation::Cos => -x.sin(),
            Activation::Square => x + x,
            Activation::Exp => x.exp(),
            Activation::Sinh => x.cosh(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::LeakyRelu => "leaky_relu",
            Activation::Tanh => "tanh",
            Activation::Sin => "sin",
            Activation::Cos => "cos",
            Activation::Square => "square",
            Activation::Exp => "exp",
            Activation::Sinh => "sinh",
        }
    }
}

/// One output unit of a heterogeneous activation layer: either an
/// elementwise function of one pre-activation column, or the product of two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Unit {
    Single { act: Activation, input: usize },
    Product { a: usize, b: usize },
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    Unary(usize, Activation),
    Columns(usize, usize, usize),
    Units(usize, Arc<[Unit]>),
    PairwiseDiff(usize),
    Sum(usize),
    Mean(usize),
    Mse(usize, usize),
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Reverse-mode gradient tape. Nodes are appended in evaluation order, so the
/// node list is already topologically sorted.
#[derive(Debug)]
pub struct Tape<T> {
    id: u64,
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by variable.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    tape: u64,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.idx).and_then(Option::as_ref)
    }

    /// Gradient for `v`, or an error if the variable did not receive one.
    pub fn wrt(&self, v: Var) -> Result<&Tensor<T>> {
        self.get(v).ok_or(Error::NotOnTape(v.idx))
    }
}

fn shape_err(op: &str, a: &[usize], b: &[usize]) -> Error {
    Error::Shape(format!("{op}: {a:?} vs {b:?}"))
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed), nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.idx >= self.nodes.len() {
            return Err(Error::NotOnTape(v.idx));
        }
        Ok(v.idx)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool, what: &str) -> Result<Var> {
        let value = value.ensure_finite(what)?;
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var { tape: self.id, idx: self.nodes.len() - 1 })
    }

    /// Record a leaf; it receives a gradient iff `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Result<Var> {
        let g = tensor.requires_grad();
        self.push(tensor, Op::Leaf, g, "leaf")
    }

    pub fn param(&mut self, tensor: Tensor<T>) -> Result<Var> {
        self.leaf(tensor.with_requires_grad(true))
    }

    pub fn constant(&mut self, tensor: Tensor<T>) -> Result<Var> {
        self.leaf(tensor.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> Result<&Tensor<T>> {
        let i = self.check(v)?;
        Ok(&self.nodes[i].value)
    }

    fn val(&self, i: usize) -> &Tensor<T> {
        &self.nodes[i].value
    }

    fn ng(&self, i: usize) -> bool {
        self.nodes[i].needs_grad
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (x, y) = (self.val(ia), self.val(ib));
        if x.cols() != y.rows() {
            return Err(shape_err("matmul", x.shape(), y.shape()));
        }
        let out = matmul_raw(x, y);
        let g = self.ng(ia) || self.ng(ib);
        self.push(out, Op::MatMul(ia, ib), g, "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let out = self.val(ia).zip_map(self.val(ib), |p, q| p + q)?;
        let g = self.ng(ia) || self.ng(ib);
        self.push(out, Op::Add(ia, ib), g, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let out = self.val(ia).zip_map(self.val(ib), |p, q| p - q)?;
        let g = self.ng(ia) || self.ng(ib);
        self.push(out, Op::Sub(ia, ib), g, "sub")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let out = self.val(ia).zip_map(self.val(ib), |p, q| p * q)?;
        let g = self.ng(ia) || self.ng(ib);
        self.push(out, Op::Mul(ia, ib), g, "mul")
    }

    /// Broadcast-add a `1 x m` row to every row of an `n x m` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(row)?);
        let (x, r) = (self.val(ia), self.val(ib));
        if r.rows() != 1 || r.cols() != x.cols() {
            return Err(shape_err("add_row", x.shape(), r.shape()));
        }
        let mut out = Tensor::zeros(&[x.rows(), x.cols()]);
        let c = x.cols();
        for (o, xi) in out.data_mut().chunks_mut(c.max(1)).zip(x.data().chunks(c.max(1))) {
            for ((ov, &xv), &rv) in o.iter_mut().zip(xi).zip(r.data()) {
                *ov = xv + rv;
            }
        }
        let g = self.ng(ia) || self.ng(ib);
        self.push(out, Op::AddRow(ia, ib), g, "add_row")
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var> {
        let ia = self.check(a)?;
        let out = self.val(ia).map(|v| v * s);
        let g = self.ng(ia);
        self.push(out, Op::Scale(ia, s), g, "scale")
    }

    pub fn unary(&mut self, a: Var, act: Activation) -> Result<Var> {
        let ia = self.check(a)?;
        let out = self.val(ia).map(|v| act.apply(v));
        let g = self.ng(ia);
        self.push(out, Op::Unary(ia, act), g, act.name())
    }

    /// Column slice `[start, end)` of a matrix.
    pub fn columns(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let ia = self.check(a)?;
        let x = self.val(ia);
        if start > end || end > x.cols() {
            return Err(Error::Shape(format!("columns {start}..{end} of {:?}", x.shape())));
        }
        let w = end - start;
        let mut data = Vec::with_capacity(x.rows() * w);
        for i in 0..x.rows() {
            data.extend_from_slice(&x.row(i)[start..end]);
        }
        let out = Tensor::matrix(x.rows(), w, data)?;
        let g = self.ng(ia);
        self.push(out, Op::Columns(ia, start, end), g, "columns")
    }

    /// Heterogeneous activation layer mapping pre-activation columns to units.
    pub fn units(&mut self, a: Var, plan: Arc<[Unit]>) -> Result<Var> {
        let ia = self.check(a)?;
        let x = self.val(ia);
        let c = x.cols();
        for u in plan.iter() {
            let bad = match *u {
                Unit::Single { input, .. } => input >= c,
                Unit::Product { a, b } => a >= c || b >= c,
            };
            if bad {
                return Err(Error::Shape(format!("unit {u:?} reads past {c} pre-activations")));
            }
        }
        let n = x.rows();
        let m = plan.len();
        let mut data = Vec::with_capacity(n * m);
        for i in 0..n {
            let r = x.row(i);
            for u in plan.iter() {
                data.push(match *u {
                    Unit::Single { act, input } => act.apply(r[input]),
                    Unit::Product { a, b } => r[a] * r[b],
                });
            }
        }
        let out = Tensor::matrix(n, m, data)?;
        let g = self.ng(ia);
        self.push(out, Op::Units(ia, plan), g, "units")
    }

    /// `n x 1` column to the `n x n` matrix of differences `z_i - z_j`.
    pub fn pairwise_diff(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let x = self.val(ia);
        if x.cols() != 1 {
            return Err(Error::Shape(format!("pairwise_diff expects a column, got {:?}", x.shape())));
        }
        let n = x.rows();
        let z = x.data();
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(z[i] - z[j]);
            }
        }
        let out = Tensor::matrix(n, n, data)?;
        let g = self.ng(ia);
        self.push(out, Op::PairwiseDiff(ia), g, "pairwise_diff")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let s: T = self.val(ia).data().iter().copied().sum();
        let g = self.ng(ia);
        self.push(Tensor::scalar(s), Op::Sum(ia), g, "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let x = self.val(ia);
        if x.is_empty() {
            return Err(Error::Shape("mean of empty tensor".into()));
        }
        let s: T = x.data().iter().copied().sum::<T>() / T::from_usize_lossy(x.len());
        let g = self.ng(ia);
        self.push(Tensor::scalar(s), Op::Mean(ia), g, "mean")
    }

    /// Mean squared error over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (x, y) = (self.val(ia), self.val(ib));
        if x.shape() != y.shape() {
            return Err(shape_err("mse", x.shape(), y.shape()));
        }
        if x.is_empty() {
            return Err(Error::Shape("mse of empty tensors".into()));
        }
        let s: T = x.data().iter().zip(y.data()).map(|(&p, &q)| (p - q) * (p - q)).sum();
        let out = Tensor::scalar(s / T::from_usize_lossy(x.len()));
        let g = self.ng(ia) || self.ng(ib);
        self.push(out, Op::Mse(ia, ib), g, "mse")
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let il = self.check(loss)?;
        if self.val(il).len() != 1 {
            return Err(Error::Shape(format!("backward needs a scalar loss, got {:?}", self.val(il).shape())));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; il + 1];
        grads[il] = Some(Tensor::full(self.val(il).shape(), T::one()));
        for i in (0..=il).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        // Only leaves flagged requires_grad report gradients; interior nodes
        // are kept for inspection.
        for (i, slot) in grads.iter_mut().enumerate() {
            if matches!(self.nodes[i].op, Op::Leaf) && !self.nodes[i].needs_grad {
                *slot = None;
            }
        }
        Ok(Gradients { tape: self.id, grads })
    }

    fn propagate(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let acc = |grads: &mut [Option<Tensor<T>>], j: usize, t: Tensor<T>| -> Result<()> {
            if !self.nodes[j].needs_grad {
                return Ok(());
            }
            match &mut grads[j] {
                Some(existing) => {
                    for (e, v) in existing.data_mut().iter_mut().zip(t.data()) {
                        *e = *e + *v;
                    }
                }
                slot @ None => *slot = Some(t),
            }
            Ok(())
        };
        match &self.nodes[i].op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (x, y) = (self.val(a), self.val(b));
                if self.ng(a) {
                    acc(grads, a, matmul_raw(g, &y.transpose()))?;
                }
                if self.ng(b) {
                    acc(grads, b, matmul_raw(&x.transpose(), g))?;
                }
            }
            &Op::Add(a, b) => {
                acc(grads, a, reshape_like(g, self.val(a)))?;
                acc(grads, b, reshape_like(g, self.val(b)))?;
            }
            &Op::Sub(a, b) => {
                acc(grads, a, reshape_like(g, self.val(a)))?;
                acc(grads, b, reshape_like(&g.map(|v| -v), self.val(b)))?;
            }
            &Op::Mul(a, b) => {
                let (x, y) = (self.val(a), self.val(b));
                if self.ng(a) {
                    acc(grads, a, reshape_like(&g.zip_map(&reshape_like(y, g), |p, q| p * q)?, x))?;
                }
                if self.ng(b) {
                    acc(grads, b, reshape_like(&g.zip_map(&reshape_like(x, g), |p, q| p * q)?, y))?;
                }
            }
            &Op::AddRow(a, r) => {
                acc(grads, a, reshape_like(g, self.val(a)))?;
                if self.ng(r) {
                    let c = g.cols();
                    let mut s = vec![T::zero(); c];
                    for k in 0..g.rows() {
                        axpy(T::one(), g.row(k), &mut s);
                    }
                    acc(grads, r, Tensor::new(self.val(r).shape().to_vec(), s)?)?;
                }
            }
            &Op::Scale(a, s) => acc(grads, a, g.map(|v| v * s))?,
            &Op::Unary(a, act) => {
                let x = self.val(a);
                let d = g.zip_map(&reshape_like(x, g), |gv, xv| gv * act.derivative(xv))?;
                acc(grads, a, reshape_like(&d, x))?;
            }
            &Op::Columns(a, start, end) => {
                let x = self.val(a);
                let mut d = Tensor::zeros(&[x.rows(), x.cols()]);
                let c = x.cols();
                let w = end - start;
                for k in 0..x.rows() {
                    d.data_mut()[k * c + start..k * c + end].copy_from_slice(&g.data()[k * w..(k + 1) * w]);
                }
                acc(grads, a, reshape_like(&d, x))?;
            }
            Op::Units(a, plan) => {
                let a = *a;
                let x = self.val(a);
                let c = x.cols();
                let m = plan.len();
                let mut d = Tensor::zeros(&[x.rows(), c]);
                for k in 0..x.rows() {
                    let r = x.row(k);
                    let gr = &g.data()[k * m..(k + 1) * m];
                    let dr = &mut d.data_mut()[k * c..(k + 1) * c];
                    for (u, &gu) in plan.iter().zip(gr) {
                        match *u {
                            Unit::Single { act, input } => {
                                dr[input] = dr[input] + gu * act.derivative(r[input]);
                            }
                            Unit::Product { a: p, b: q } => {
                                dr[p] = dr[p] + gu * r[q];
                                dr[q] = dr[q] + gu * r[p];
                            }
                        }
                    }
                }
                acc(grads, a, reshape_like(&d, x))?;
            }
            &Op::PairwiseDiff(a) => {
                let x = self.val(a);
                let n = x.rows();
                let mut d = vec![T::zero(); n];
                for p in 0..n {
                    for q in 0..n {
                        let v = g.data()[p * n + q];
                        d[p] = d[p] + v;
                        d[q] = d[q] - v;
                    }
                }
                acc(grads, a, Tensor::new(x.shape().to_vec(), d)?)?;
            }
            &Op::Sum(a) => {
                let gv = g.item()?;
                acc(grads, a, Tensor::full(self.val(a).shape(), gv))?;
            }
            &Op::Mean(a) => {
                let x = self.val(a);
                let gv = g.item()? / T::from_usize_lossy(x.len());
                acc(grads, a, Tensor::full(x.shape(), gv))?;
            }
            &Op::Mse(a, b) => {
                let (x, y) = (self.val(a), self.val(b));
                let f = g.item()? * T::lit(2.0) / T::from_usize_lossy(x.len());
                let d = x.zip_map(y, |p, q| (p - q) * f)?;
                if self.ng(b) {
                    acc(grads, b, d.map(|v| -v))?;
                }
                acc(grads, a, d)?;
            }
        }
        Ok(())
    }
}

fn reshape_like<T: Scalar>(t: &Tensor<T>, like: &Tensor<T>) -> Tensor<T> {
    if t.shape() == like.shape() {
        return t.clone();
    }
    Tensor::new(like.shape().to_vec(), t.data().to_vec()).expect("same element count")
}

/// Plain matrix product over matrix views.
pub(crate) fn matmul_raw<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>) -> Tensor<T> {
    let (n, k, m) = (x.rows(), x.cols(), y.cols());
    let mut out = vec![T::zero(); n * m];
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        let xrow = x.row(i);
        for (kk, &a) in xrow.iter().enumerate().take(k) {
            if a != T::zero() {
                axpy(a, y.row(kk), orow);
            }
        }
    }
    Tensor::matrix(n, m, out).expect("matmul dims")
}
