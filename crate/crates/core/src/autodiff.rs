//! Define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] owns an append-only list of nodes; [`Var`] is a cheap handle to
//! one of them. Every op appends exactly one node whose inputs were created
//! earlier, so node order is a topological order and [`Tape::backward`] is a
//! single reverse sweep.
//!
//! Nodes that do not depend on any `requires_grad` leaf are stored as
//! constants and skipped during the sweep.

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{dim_err, Error, Result};
use crate::sparse::CsrMatrix;
use crate::tensor::Tensor;

/// Boundary slack for clamped domains (arcosh, artanh, sqrt).
pub const DOMAIN_EPS: f64 = 1e-15;

/// Below this argument the radial functions switch to their Taylor series.
const SERIES_CUTOFF: f64 = 1e-3;

/// Smooth scalar functions of a row norm, `φ(‖x‖)`, used by the manifold maps.
///
/// Each variant is written in terms of `u = s·r` with `s = √c`. They are
/// evaluated together with `φ'(r)/r`, which is what the gradient
/// `∂φ(‖x‖)/∂x = (φ'(r)/r)·x` needs, and both stay finite at `r = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RadialFn {
    /// `tanh(u)/u`
    Tanhc { s: f64 },
    /// `artanh(u)/u`, domain `u < 1`
    Artanhc { s: f64 },
    /// `sinh(u)/u`
    Sinhc { s: f64 },
    /// `arsinh(u)/u`
    Arsinhc { s: f64 },
    /// `cosh(u)/s`
    CoshScaled { s: f64 },
    /// `sqrt(a + r²)`
    SqrtOffset { a: f64 },
}

impl RadialFn {
    /// Returns `(φ(r), φ'(r)/r)`.
    pub fn eval(self, r: f64) -> Result<(f64, f64)> {
        Ok(match self {
            RadialFn::Tanhc { s } => {
                let u = s * r;
                if u < SERIES_CUTOFF {
                    let u2 = u * u;
                    (
                        1.0 - u2 / 3.0 + 2.0 * u2 * u2 / 15.0,
                        s * s * (-2.0 / 3.0 + 8.0 * u2 / 15.0),
                    )
                } else {
                    let t = u.tanh();
                    (t / u, s * s * (u * (1.0 - t * t) - t) / (u * u * u))
                }
            }
            RadialFn::Artanhc { s } => {
                let mut u = s * r;
                if u >= 1.0 {
                    if u < 1.0 + DOMAIN_EPS {
                        u = 1.0 - DOMAIN_EPS;
                    } else {
                        return Err(Error::Domain {
                            op: "artanh",
                            detail: format!("radius·√c = {u} ≥ 1"),
                        });
                    }
                }
                if u < SERIES_CUTOFF {
                    let u2 = u * u;
                    (
                        1.0 + u2 / 3.0 + u2 * u2 / 5.0,
                        s * s * (2.0 / 3.0 + 4.0 * u2 / 5.0),
                    )
                } else {
                    let a = u.atanh();
                    (a / u, s * s * (u / (1.0 - u * u) - a) / (u * u * u))
                }
            }
            RadialFn::Sinhc { s } => {
                let u = s * r;
                if u < SERIES_CUTOFF {
                    let u2 = u * u;
                    (
                        1.0 + u2 / 6.0 + u2 * u2 / 120.0,
                        s * s * (1.0 / 3.0 + u2 / 30.0),
                    )
                } else {
                    (u.sinh() / u, s * s * (u * u.cosh() - u.sinh()) / (u * u * u))
                }
            }
            RadialFn::Arsinhc { s } => {
                let u = s * r;
                if u < SERIES_CUTOFF {
                    let u2 = u * u;
                    (
                        1.0 - u2 / 6.0 + 3.0 * u2 * u2 / 40.0,
                        s * s * (-1.0 / 3.0 + 3.0 * u2 / 10.0),
                    )
                } else {
                    let a = u.asinh();
                    (
                        a / u,
                        s * s * (u / (1.0 + u * u).sqrt() - a) / (u * u * u),
                    )
                }
            }
            RadialFn::CoshScaled { s } => {
                let u = s * r;
                let sinhc = if u < SERIES_CUTOFF {
                    1.0 + u * u / 6.0
                } else {
                    u.sinh() / u
                };
                (u.cosh() / s, s * sinhc)
            }
            RadialFn::SqrtOffset { a } => {
                let v = (a + r * r).sqrt();
                (v, 1.0 / v)
            }
        })
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, f64),
    Shift(usize),
    AddRow(usize, usize),
    AddCol(usize, usize),
    MulRow(usize, usize),
    MulCol(usize, usize),
    DivCol(usize, usize),
    Relu(usize),
    Tanh(usize),
    Sinh(usize),
    Cosh(usize),
    Arcosh(usize),
    Artanh(usize),
    Exp(usize),
    Log(usize),
    Sqrt(usize),
    Square(usize),
    RowNorm(usize),
    RowSum(usize),
    ColMean(usize),
    Softmax(usize),
    LogSoftmax(usize),
    Sum(usize),
    Mean(usize),
    Concat(Vec<usize>),
    Slice(usize, usize, usize),
    Transpose(usize),
    Radial(usize, RadialFn),
    BallClip {
        src: usize,
        trigger_sq: f64,
        target: f64,
    },
    SpMM(Rc<CsrMatrix>, usize),
    GatherRows(usize, Rc<Vec<usize>>),
    PickCols(usize, Rc<Vec<usize>>),
}

impl Op {
    fn inputs(&self) -> Vec<usize> {
        use Op::*;
        match self {
            Leaf => vec![],
            MatMul(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | AddRow(a, b)
            | AddCol(a, b) | MulRow(a, b) | MulCol(a, b) | DivCol(a, b) => vec![*a, *b],
            Scale(a, _) | Shift(a) | Relu(a) | Tanh(a) | Sinh(a) | Cosh(a) | Arcosh(a)
            | Artanh(a) | Exp(a) | Log(a) | Sqrt(a) | Square(a) | RowNorm(a) | RowSum(a)
            | ColMean(a) | Softmax(a) | LogSoftmax(a) | Sum(a) | Mean(a) | Slice(a, _, _)
            | Transpose(a) | Radial(a, _) | SpMM(_, a) | GatherRows(a, _) | PickCols(a, _) => {
                vec![*a]
            }
            BallClip { src, .. } => vec![*src],
            Concat(v) => v.clone(),
        }
    }
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

/// Gradients produced by one backward sweep, indexed by node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`, or zeros when `v` did not influence the loss.
    pub fn wrt(&self, v: Var<'_>) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros_like(&v.value()))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A constant leaf.
    pub fn constant(&self, t: Tensor) -> Var<'_> {
        self.push_raw(t, Op::Leaf, false)
    }

    /// A leaf that receives a gradient.
    pub fn param(&self, t: Tensor) -> Var<'_> {
        self.push_raw(t, Op::Leaf, true)
    }

    fn push_raw(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        let requires_grad = {
            let nodes = self.nodes.borrow();
            op.inputs().iter().any(|&i| nodes[i].requires_grad)
        };
        if requires_grad {
            self.push_raw(value, op, true)
        } else {
            self.push_raw(value, Op::Leaf, false)
        }
    }

    fn value(&self, id: usize) -> Rc<Tensor> {
        self.nodes.borrow()[id].value.clone()
    }

    /// Reverse sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        assert!(std::ptr::eq(loss.tape, self), "loss belongs to another tape");
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.numel() != 1 || root.value.shape().len() > 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor::new(root.value.shape().to_vec(), vec![1.0])?);

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let contributions = node_backward(&nodes, node, &g)?;
            for (input, contrib) in contributions {
                if !nodes[input].requires_grad {
                    continue;
                }
                match &mut grads[input] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return dim_err(op, format!("{:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

fn require_matrix(op: &'static str, a: &Tensor) -> Result<()> {
    if !a.is_matrix() {
        return dim_err(op, format!("expected a matrix, got {:?}", a.shape()));
    }
    Ok(())
}

fn broadcast_row(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let mut out = a.clone();
    let brow = b.data();
    for r in 0..a.rows() {
        for (x, &y) in out.row_mut(r).iter_mut().zip(brow) {
            *x = f(*x, y);
        }
    }
    out
}

fn broadcast_col(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let mut out = a.clone();
    for r in 0..a.rows() {
        let y = b.data()[r];
        for x in out.row_mut(r) {
            *x = f(*x, y);
        }
    }
    out
}

fn col_sum(g: &Tensor) -> Tensor {
    let c = g.cols();
    let mut out = vec![0.0; c];
    for r in 0..g.rows() {
        for (o, x) in out.iter_mut().zip(g.row(r)) {
            *o += x;
        }
    }
    Tensor::matrix(1, c, out)
}

fn row_sum(g: &Tensor) -> Tensor {
    Tensor::matrix(g.rows(), 1, (0..g.rows()).map(|r| g.row(r).iter().sum()).collect())
}

fn row_dot(a: &Tensor, b: &Tensor) -> Tensor {
    Tensor::matrix(
        a.rows(),
        1,
        (0..a.rows()).map(|r| crate::tensor::dot(a.row(r), b.row(r))).collect(),
    )
}

fn node_backward(nodes: &[Node], node: &Node, g: &Tensor) -> Result<Vec<(usize, Tensor)>> {
    use Op::*;
    let val = |i: usize| -> &Tensor { &nodes[i].value };
    let y = &*node.value;
    Ok(match &node.op {
        Leaf => vec![],
        MatMul(a, b) => vec![
            (*a, g.matmul_nt(val(*b))?),
            (*b, val(*a).matmul_tn(g)?),
        ],
        Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
        Sub(a, b) => vec![(*a, g.clone()), (*b, g.scale(-1.0))],
        Mul(a, b) => vec![
            (*a, g.zip_map(val(*b), |g, y| g * y)),
            (*b, g.zip_map(val(*a), |g, x| g * x)),
        ],
        Div(a, b) => {
            let (x, d) = (val(*a), val(*b));
            let gb = Tensor::new(
                d.shape().to_vec(),
                g.data()
                    .iter()
                    .zip(x.data())
                    .zip(d.data())
                    .map(|((g, x), d)| -g * x / (d * d))
                    .collect(),
            )?;
            vec![(*a, g.zip_map(d, |g, d| g / d)), (*b, gb)]
        }
        Scale(a, s) => vec![(*a, g.scale(*s))],
        Shift(a) => vec![(*a, g.clone())],
        AddRow(a, b) => vec![(*a, g.clone()), (*b, col_sum(g))],
        AddCol(a, b) => vec![(*a, g.clone()), (*b, row_sum(g))],
        MulRow(a, b) => vec![
            (*a, broadcast_row(g, val(*b), |g, y| g * y)),
            (*b, col_sum(&g.zip_map(val(*a), |g, x| g * x))),
        ],
        MulCol(a, b) => vec![
            (*a, broadcast_col(g, val(*b), |g, y| g * y)),
            (*b, row_dot(g, val(*a))),
        ],
        DivCol(a, b) => {
            let d = val(*b);
            let gd = row_dot(g, val(*a));
            let gb = gd.zip_map(d, |s, d| -s / (d * d));
            vec![(*a, broadcast_col(g, d, |g, d| g / d)), (*b, gb)]
        }
        Relu(a) => vec![(*a, g.zip_map(val(*a), |g, x| if x > 0.0 { g } else { 0.0 }))],
        Tanh(a) => vec![(*a, g.zip_map(y, |g, t| g * (1.0 - t * t)))],
        Sinh(a) => vec![(*a, g.zip_map(val(*a), |g, x| g * x.cosh()))],
        Cosh(a) => vec![(*a, g.zip_map(val(*a), |g, x| g * x.sinh()))],
        Arcosh(a) => vec![(
            *a,
            g.zip_map(val(*a), |g, x| {
                let x = x.max(1.0);
                g / (x * x - 1.0).sqrt()
            }),
        )],
        Artanh(a) => vec![(
            *a,
            g.zip_map(val(*a), |g, x| {
                let x = x.clamp(-1.0 + DOMAIN_EPS, 1.0 - DOMAIN_EPS);
                g / (1.0 - x * x)
            }),
        )],
        Exp(a) => vec![(*a, g.zip_map(y, |g, e| g * e))],
        Log(a) => vec![(*a, g.zip_map(val(*a), |g, x| g / x))],
        Sqrt(a) => vec![(*a, g.zip_map(y, |g, s| g / (2.0 * s)))],
        Square(a) => vec![(*a, g.zip_map(val(*a), |g, x| 2.0 * g * x))],
        RowNorm(a) => {
            let x = val(*a);
            let mut out = x.clone();
            for r in 0..x.rows() {
                let n = y.data()[r];
                let gr = g.data()[r];
                let scale = if n > 0.0 { gr / n } else { 0.0 };
                for v in out.row_mut(r) {
                    *v *= scale;
                }
            }
            vec![(*a, out)]
        }
        RowSum(a) => {
            let x = val(*a);
            let ones = Tensor::full(x.rows(), x.cols(), 1.0);
            vec![(*a, broadcast_col(&ones, g, |_, g| g))]
        }
        ColMean(a) => {
            let x = val(*a);
            let n = x.rows() as f64;
            let base = Tensor::zeros(x.rows(), x.cols());
            vec![(*a, broadcast_row(&base, g, |_, g| g / n))]
        }
        Softmax(a) => {
            let s = row_dot(g, y);
            let mut out = g.clone();
            for r in 0..out.rows() {
                let sr = s.data()[r];
                for (o, &p) in out.row_mut(r).iter_mut().zip(y.row(r)) {
                    *o = p * (*o - sr);
                }
            }
            vec![(*a, out)]
        }
        LogSoftmax(a) => {
            let gs = row_sum(g);
            let mut out = g.clone();
            for r in 0..out.rows() {
                let sr = gs.data()[r];
                for (o, &lp) in out.row_mut(r).iter_mut().zip(y.row(r)) {
                    *o -= lp.exp() * sr;
                }
            }
            vec![(*a, out)]
        }
        Sum(a) => {
            let x = val(*a);
            let gv = g.data()[0];
            vec![(*a, x.map(|_| gv))]
        }
        Mean(a) => {
            let x = val(*a);
            let gv = g.data()[0] / x.numel() as f64;
            vec![(*a, x.map(|_| gv))]
        }
        Concat(ids) => {
            let mut start = 0;
            let mut parts = Vec::with_capacity(ids.len());
            for &i in ids {
                let w = val(i).cols();
                parts.push((i, slice_cols_value(g, start, start + w)));
                start += w;
            }
            parts
        }
        Slice(a, start, end) => {
            let x = val(*a);
            let mut out = Tensor::zeros(x.rows(), x.cols());
            for r in 0..x.rows() {
                out.row_mut(r)[*start..*end].copy_from_slice(g.row(r));
            }
            vec![(*a, out)]
        }
        Transpose(a) => vec![(*a, g.transpose())],
        Radial(a, f) => {
            let x = val(*a);
            let mut out = x.clone();
            for r in 0..x.rows() {
                let norm = crate::tensor::dot(x.row(r), x.row(r)).sqrt();
                let (_, q) = f.eval(norm)?;
                let gr = g.data()[r] * q;
                for v in out.row_mut(r) {
                    *v *= gr;
                }
            }
            vec![(*a, out)]
        }
        BallClip {
            src,
            trigger_sq,
            target,
        } => {
            let x = val(*src);
            let mut out = g.clone();
            for r in 0..x.rows() {
                let xr = x.row(r);
                let n2 = crate::tensor::dot(xr, xr);
                if n2 >= *trigger_sq {
                    let n = n2.sqrt();
                    let gr = g.row(r);
                    let proj = crate::tensor::dot(gr, xr) / n2;
                    for ((o, &gv), &xv) in out.row_mut(r).iter_mut().zip(gr).zip(xr) {
                        *o = target / n * (gv - proj * xv);
                    }
                }
            }
            vec![(*src, out)]
        }
        SpMM(m, a) => vec![(*a, m.transpose_matmul_dense(g)?)],
        GatherRows(a, idx) => {
            let x = val(*a);
            let mut out = Tensor::zeros(x.rows(), x.cols());
            for (k, &i) in idx.iter().enumerate() {
                for (o, &gv) in out.row_mut(i).iter_mut().zip(g.row(k)) {
                    *o += gv;
                }
            }
            vec![(*a, out)]
        }
        PickCols(a, idx) => {
            let x = val(*a);
            let mut out = Tensor::zeros(x.rows(), x.cols());
            for (r, &c) in idx.iter().enumerate() {
                out.set(r, c, g.data()[r]);
            }
            vec![(*a, out)]
        }
    })
}

fn slice_cols_value(x: &Tensor, start: usize, end: usize) -> Tensor {
    let w = end - start;
    let mut data = Vec::with_capacity(x.rows() * w);
    for r in 0..x.rows() {
        data.extend_from_slice(&x.row(r)[start..end]);
    }
    Tensor::matrix(x.rows(), w, data)
}

fn clamp_domain(
    op: &'static str,
    x: &Tensor,
    check: impl Fn(f64) -> std::result::Result<f64, ()>,
) -> Result<Tensor> {
    let mut out = x.clone();
    for v in out.data_mut() {
        match check(*v) {
            Ok(c) => *v = c,
            Err(()) => {
                return Err(Error::Domain {
                    op,
                    detail: format!("value {v}"),
                })
            }
        }
    }
    Ok(out)
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn rows(&self) -> usize {
        self.value().rows()
    }

    pub fn cols(&self) -> usize {
        self.value().cols()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    fn check_tape(&self, other: &Var<'t>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "vars from different tapes"
        );
    }

    fn unary(&self, f: impl Fn(f64) -> f64, op: Op) -> Var<'t> {
        let v = self.value().map(f);
        self.tape.push(v, op)
    }

    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.check_tape(&other);
        let v = self.value().matmul(&other.value())?;
        Ok(self.tape.push(v, Op::MatMul(self.id, other.id)))
    }

    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.check_tape(&other);
        let (a, b) = (self.value(), other.value());
        same_shape("add", &a, &b)?;
        Ok(self.tape.push(a.zip_map(&b, |x, y| x + y), Op::Add(self.id, other.id)))
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.check_tape(&other);
        let (a, b) = (self.value(), other.value());
        same_shape("sub", &a, &b)?;
        Ok(self.tape.push(a.zip_map(&b, |x, y| x - y), Op::Sub(self.id, other.id)))
    }

    /// Elementwise product.
    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.check_tape(&other);
        let (a, b) = (self.value(), other.value());
        same_shape("mul", &a, &b)?;
        Ok(self.tape.push(a.zip_map(&b, |x, y| x * y), Op::Mul(self.id, other.id)))
    }

    /// Elementwise quotient.
    pub fn div(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.check_tape(&other);
        let (a, b) = (self.value(), other.value());
        same_shape("div", &a, &b)?;
        Ok(self.tape.push(a.zip_map(&b, |x, y| x / y), Op::Div(self.id, other.id)))
    }

    pub fn scale(&self, s: f64) -> Var<'t> {
        self.unary(|x| x * s, Op::Scale(self.id, s))
    }

    pub fn shift(&self, s: f64) -> Var<'t> {
        self.unary(|x| x + s, Op::Shift(self.id))
    }

    /// `self (n×k) + row (1×k)` broadcast over rows.
    pub fn add_row(&self, row: Var<'t>) -> Result<Var<'t>> {
        self.check_tape(&row);
        let (a, b) = (self.value(), row.value());
        check_row_bcast("add_row", &a, &b)?;
        Ok(self
            .tape
            .push(broadcast_row(&a, &b, |x, y| x + y), Op::AddRow(self.id, row.id)))
    }

    /// `self (n×k) ∘ row (1×k)` broadcast over rows.
    pub fn mul_row(&self, row: Var<'t>) -> Result<Var<'t>> {
        self.check_tape(&row);
        let (a, b) = (self.value(), row.value());
        check_row_bcast("mul_row", &a, &b)?;
        Ok(self
            .tape
            .push(broadcast_row(&a, &b, |x, y| x * y), Op::MulRow(self.id, row.id)))
    }

    /// `self (n×k) + col (n×1)` broadcast over columns.
    pub fn add_col(&self, col: Var<'t>) -> Result<Var<'t>> {
        self.check_tape(&col);
        let (a, b) = (self.value(), col.value());
        check_col_bcast("add_col", &a, &b)?;
        Ok(self
            .tape
            .push(broadcast_col(&a, &b, |x, y| x + y), Op::AddCol(self.id, col.id)))
    }

    /// `self (n×k) ∘ col (n×1)` broadcast over columns.
    pub fn mul_col(&self, col: Var<'t>) -> Result<Var<'t>> {
        self.check_tape(&col);
        let (a, b) = (self.value(), col.value());
        check_col_bcast("mul_col", &a, &b)?;
        Ok(self
            .tape
            .push(broadcast_col(&a, &b, |x, y| x * y), Op::MulCol(self.id, col.id)))
    }

    /// `self (n×k) / col (n×1)` broadcast over columns.
    pub fn div_col(&self, col: Var<'t>) -> Result<Var<'t>> {
        self.check_tape(&col);
        let (a, b) = (self.value(), col.value());
        check_col_bcast("div_col", &a, &b)?;
        Ok(self
            .tape
            .push(broadcast_col(&a, &b, |x, y| x / y), Op::DivCol(self.id, col.id)))
    }

    pub fn relu(&self) -> Var<'t> {
        self.unary(|x| x.max(0.0), Op::Relu(self.id))
    }

    pub fn tanh(&self) -> Var<'t> {
        self.unary(f64::tanh, Op::Tanh(self.id))
    }

    pub fn sinh(&self) -> Var<'t> {
        self.unary(f64::sinh, Op::Sinh(self.id))
    }

    pub fn cosh(&self) -> Var<'t> {
        self.unary(f64::cosh, Op::Cosh(self.id))
    }

    pub fn exp(&self) -> Var<'t> {
        self.unary(f64::exp, Op::Exp(self.id))
    }

    pub fn square(&self) -> Var<'t> {
        self.unary(|x| x * x, Op::Square(self.id))
    }

    /// Inputs in `[1 − ε, 1)` are clamped to 1; anything lower is an error.
    pub fn arcosh(&self) -> Result<Var<'t>> {
        let clamped = clamp_domain("arcosh", &self.value(), |x| {
            if x >= 1.0 {
                Ok(x)
            } else if x >= 1.0 - DOMAIN_EPS {
                Ok(1.0)
            } else {
                Err(())
            }
        })?;
        Ok(self.tape.push(clamped.map(f64::acosh), Op::Arcosh(self.id)))
    }

    /// Inputs within ε of ±1 are pulled to ±(1 − ε); beyond that is an error.
    pub fn artanh(&self) -> Result<Var<'t>> {
        let clamped = clamp_domain("artanh", &self.value(), |x| {
            if x.abs() < 1.0 {
                Ok(x)
            } else if x.abs() < 1.0 + DOMAIN_EPS {
                Ok(x.signum() * (1.0 - DOMAIN_EPS))
            } else {
                Err(())
            }
        })?;
        Ok(self.tape.push(clamped.map(f64::atanh), Op::Artanh(self.id)))
    }

    pub fn log(&self) -> Result<Var<'t>> {
        let x = self.value();
        if let Some(bad) = x.data().iter().find(|&&v| !(v > 0.0)) {
            return Err(Error::Domain {
                op: "log",
                detail: format!("value {bad}"),
            });
        }
        Ok(self.tape.push(x.map(f64::ln), Op::Log(self.id)))
    }

    pub fn sqrt(&self) -> Result<Var<'t>> {
        let clamped = clamp_domain("sqrt", &self.value(), |x| {
            if x >= 0.0 {
                Ok(x)
            } else if x > -DOMAIN_EPS {
                Ok(0.0)
            } else {
                Err(())
            }
        })?;
        Ok(self.tape.push(clamped.map(f64::sqrt), Op::Sqrt(self.id)))
    }

    /// Per-row Euclidean norm, `n×k → n×1`.
    pub fn row_l2_norm(&self) -> Result<Var<'t>> {
        let x = self.value();
        require_matrix("row_l2_norm", &x)?;
        let v = Tensor::matrix(x.rows(), 1, x.row_sq_norms().into_iter().map(f64::sqrt).collect());
        Ok(self.tape.push(v, Op::RowNorm(self.id)))
    }

    /// `n×k → n×1`.
    pub fn row_sum(&self) -> Result<Var<'t>> {
        let x = self.value();
        require_matrix("row_sum", &x)?;
        Ok(self.tape.push(row_sum(&x), Op::RowSum(self.id)))
    }

    /// Per-column mean over rows, `n×k → 1×k`.
    pub fn col_mean(&self) -> Result<Var<'t>> {
        let x = self.value();
        require_matrix("col_mean", &x)?;
        let n = x.rows() as f64;
        let v = col_sum(&x).map(|s| s / n);
        Ok(self.tape.push(v, Op::ColMean(self.id)))
    }

    pub fn softmax_rows(&self) -> Result<Var<'t>> {
        let x = self.value();
        require_matrix("softmax_rows", &x)?;
        let mut out = (*x).clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        Ok(self.tape.push(out, Op::Softmax(self.id)))
    }

    pub fn log_softmax_rows(&self) -> Result<Var<'t>> {
        let x = self.value();
        require_matrix("log_softmax_rows", &x)?;
        let mut out = (*x).clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        Ok(self.tape.push(out, Op::LogSoftmax(self.id)))
    }

    /// Sum of all entries as a rank-0 tensor.
    pub fn sum(&self) -> Var<'t> {
        let s = self.value().sum();
        self.tape.push(Tensor::scalar(s), Op::Sum(self.id))
    }

    pub fn mean(&self) -> Var<'t> {
        let x = self.value();
        let m = x.sum() / x.numel() as f64;
        self.tape.push(Tensor::scalar(m), Op::Mean(self.id))
    }

    pub fn transpose(&self) -> Result<Var<'t>> {
        let x = self.value();
        require_matrix("transpose", &x)?;
        Ok(self.tape.push(x.transpose(), Op::Transpose(self.id)))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Var<'t>> {
        let x = self.value();
        require_matrix("slice_cols", &x)?;
        if start > end || end > x.cols() {
            return dim_err("slice_cols", format!("{start}..{end} of {} columns", x.cols()));
        }
        Ok(self
            .tape
            .push(slice_cols_value(&x, start, end), Op::Slice(self.id, start, end)))
    }

    /// `φ(‖row‖)` per row, `n×k → n×1`.
    pub fn radial(&self, f: RadialFn) -> Result<Var<'t>> {
        let x = self.value();
        require_matrix("radial", &x)?;
        let mut out = Vec::with_capacity(x.rows());
        for n2 in x.row_sq_norms() {
            out.push(f.eval(n2.sqrt())?.0);
        }
        Ok(self
            .tape
            .push(Tensor::matrix(x.rows(), 1, out), Op::Radial(self.id, f)))
    }

    /// Rows with `‖x‖² ≥ trigger_sq` are rescaled to norm `target`; other
    /// rows pass through unchanged.
    pub fn ball_clip(&self, trigger_sq: f64, target: f64) -> Result<Var<'t>> {
        let x = self.value();
        require_matrix("ball_clip", &x)?;
        let mut out = (*x).clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let n2 = crate::tensor::dot(row, row);
            if n2 >= trigger_sq {
                let s = target / n2.sqrt();
                for v in row.iter_mut() {
                    *v *= s;
                }
            }
        }
        Ok(self.tape.push(
            out,
            Op::BallClip {
                src: self.id,
                trigger_sq,
                target,
            },
        ))
    }

    /// `m · self` with a constant sparse `m`.
    pub fn spmm(&self, m: &Rc<CsrMatrix>) -> Result<Var<'t>> {
        let v = m.matmul_dense(&self.value())?;
        Ok(self.tape.push(v, Op::SpMM(m.clone(), self.id)))
    }

    /// Rows `idx` in order (`idx` may repeat).
    pub fn gather_rows(&self, idx: &[usize]) -> Result<Var<'t>> {
        let x = self.value();
        require_matrix("gather_rows", &x)?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= x.rows()) {
            return dim_err("gather_rows", format!("row {bad} of {}", x.rows()));
        }
        Ok(self
            .tape
            .push(x.select_rows(idx), Op::GatherRows(self.id, Rc::new(idx.to_vec()))))
    }

    /// Entry `(r, cols[r])` of every row, `n×k → n×1`.
    pub fn pick_cols(&self, cols: &[usize]) -> Result<Var<'t>> {
        let x = self.value();
        require_matrix("pick_cols", &x)?;
        if cols.len() != x.rows() {
            return dim_err("pick_cols", format!("{} indices for {} rows", cols.len(), x.rows()));
        }
        if let Some(&bad) = cols.iter().find(|&&c| c >= x.cols()) {
            return dim_err("pick_cols", format!("column {bad} of {}", x.cols()));
        }
        let v = Tensor::matrix(
            x.rows(),
            1,
            cols.iter().enumerate().map(|(r, &c)| x.get(r, c)).collect(),
        );
        Ok(self.tape.push(v, Op::PickCols(self.id, Rc::new(cols.to_vec()))))
    }
}

fn check_row_bcast(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    require_matrix(op, a)?;
    if b.rows() != 1 || b.cols() != a.cols() {
        return dim_err(op, format!("{:?} with row {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

fn check_col_bcast(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    require_matrix(op, a)?;
    if b.cols() != 1 || b.rows() != a.rows() {
        return dim_err(op, format!("{:?} with column {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

/// Horizontal concatenation of matrices with equal row counts.
pub fn concat_cols<'t>(parts: &[Var<'t>]) -> Result<Var<'t>> {
    let Some(first) = parts.first() else {
        return dim_err("concat_cols", "no inputs");
    };
    let tape = first.tape;
    let values: Vec<Rc<Tensor>> = parts.iter().map(|p| p.value()).collect();
    let rows = values[0].rows();
    for v in &values {
        require_matrix("concat_cols", v)?;
        if v.rows() != rows {
            return dim_err("concat_cols", format!("row counts {rows} vs {}", v.rows()));
        }
    }
    let total: usize = values.iter().map(|v| v.cols()).sum();
    let mut data = Vec::with_capacity(rows * total);
    for r in 0..rows {
        for v in &values {
            data.extend_from_slice(v.row(r));
        }
    }
    Ok(tape.push(
        Tensor::matrix(rows, total, data),
        Op::Concat(parts.iter().map(|p| p.id).collect()),
    ))
}
