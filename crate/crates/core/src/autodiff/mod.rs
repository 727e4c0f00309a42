//! Tape-based reverse-mode automatic differentiation over dense 2-D
//! matrices.
//!
//! A [`Tape`] records every operation as a node. Operands always precede
//! their results, so walking the node list backwards is a topological order
//! and each node is visited exactly once. Gradients of shared
//! subexpressions accumulate additively.
//!
//! ```
//! use cagnn_core::autodiff::Tape;
//! use cagnn_core::linalg::Matrix;
//!
//! let tape = Tape::new();
//! let x = tape.param(Matrix::from_rows(&[vec![1.0, -2.0]]).unwrap());
//! let y = x.hadamard(x).unwrap().sum();
//! let grads = tape.backward(y);
//! assert_eq!(grads.get(x).unwrap().data(), &[2.0, -4.0]);
//! ```

mod adam;
pub mod check;
mod sparse;

pub use adam::{Adam, AdamConfig};
pub use sparse::SparseMatrix;

use std::cell::{Ref, RefCell};
use std::rc::Rc;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

type Id = usize;

enum Op {
    Leaf,
    MatMul(Id, Id),
    SpMM(Arc<SparseMatrix>, Id),
    Add(Id, Id),
    Sub(Id, Id),
    Hadamard(Id, Id),
    ConcatCols(Id, Id),
    SliceCols(Id, usize),
    BroadcastCol(Id, Id),
    AddRowBias(Id, Id),
    MulRow(Id, Id),
    ScaleVar(Id, Id),
    Affine(Id, f64),
    Relu(Id),
    Sigmoid(Id),
    LeakyRelu(Id, f64),
    LogSoftmaxRows(Id),
    L2NormalizeRows(Id),
    LayerNormRows(Id, f64),
    Dropout(Id, Rc<Vec<f64>>),
    Sum(Id),
    MaskedCrossEntropy {
        logits: Id,
        labels: Rc<[usize]>,
        mask: Rc<[usize]>,
    },
    EdgeAttention {
        structure: Arc<SparseMatrix>,
        values: Id,
        dst_score: Id,
        src_score: Id,
        slope: f64,
        /// softmax weight per structure entry
        weights: Vec<f64>,
        /// pre-activation score per structure entry
        logits: Vec<f64>,
    },
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Records operations for one forward/backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: Id,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var<'_>) -> Option<&Matrix> {
        self.grads.get(v.id).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var<'_>) -> Option<Matrix> {
        self.grads.get_mut(v.id).and_then(Option::take)
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

    fn push(&self, value: Matrix, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Leaf that receives a gradient.
    pub fn param(&self, value: Matrix) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf without gradient.
    pub fn constant(&self, value: Matrix) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    fn value(&self, id: Id) -> Ref<'_, Matrix> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    fn needs(&self, id: Id) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// `S · x` for a constant sparse `S`.
    pub fn spmm<'t>(&'t self, s: &Arc<SparseMatrix>, x: Var<'t>) -> Result<Var<'t>> {
        let out = s.spmm(&x.value())?;
        Ok(self.push(out, Op::SpMM(Arc::clone(s), x.id), x.requires_grad()))
    }

    /// Attention-weighted aggregation over a fixed neighborhood structure.
    ///
    /// For every stored entry `(i, j)` of `structure` the score is
    /// `LeakyReLU(dst_score[i] + src_score[j])`; scores are softmax-normalized
    /// over row `i` and the output row is `Σ_j weight_ij · values[j]`.
    /// Rows of `structure` without entries produce zero rows.
    pub fn edge_attention<'t>(
        &'t self,
        structure: &Arc<SparseMatrix>,
        values: Var<'t>,
        dst_score: Var<'t>,
        src_score: Var<'t>,
        slope: f64,
    ) -> Result<Var<'t>> {
        let n = structure.rows();
        let (vr, d) = values.shape();
        if structure.cols() != vr || dst_score.shape() != (n, 1) || src_score.shape() != (vr, 1) {
            return Err(Error::Shape {
                op: "edge_attention",
                left: structure.shape(),
                right: values.shape(),
            });
        }
        let (weights, logits) = {
            let sd = dst_score.value();
            let ss = src_score.value();
            attention_weights(structure, sd.data(), ss.data(), slope)
        };
        let mut out = Matrix::zeros(n, d);
        {
            let v = values.value();
            for i in 0..n {
                let o = out.row_mut(i);
                for e in structure.row_range(i) {
                    let j = structure.indices()[e];
                    let w = weights[e];
                    for (o, &x) in o.iter_mut().zip(v.row(j)) {
                        *o += w * x;
                    }
                }
            }
        }
        let rg = values.requires_grad() || dst_score.requires_grad() || src_score.requires_grad();
        Ok(self.push(
            out,
            Op::EdgeAttention {
                structure: Arc::clone(structure),
                values: values.id,
                dst_score: dst_score.id,
                src_score: src_score.id,
                slope,
                weights,
                logits,
            },
            rg,
        ))
    }

    /// Reverse sweep from `root`, seeding its gradient with ones.
    pub fn backward(&self, root: Var<'_>) -> Gradients {
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Matrix>> = (0..nodes.len()).map(|_| None).collect();
        let (r, c) = nodes[root.id].value.shape();
        grads[root.id] = Some(Matrix::filled(r, c, 1.0));

        for id in (0..=root.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            backprop(&nodes, node, &g, &mut grads);
            grads[id] = Some(g);
        }
        Gradients { grads }
    }
}

fn accumulate(nodes: &[Node], grads: &mut [Option<Matrix>], id: Id, g: Matrix) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut grads[id] {
        Some(acc) => acc.add_assign(&g),
        slot => *slot = Some(g),
    }
}

fn backprop(nodes: &[Node], node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
    let val = |id: Id| &nodes[id].value;
    let needs = |id: Id| nodes[id].requires_grad;
    let y = &node.value;
    match &node.op {
        Op::Leaf => {}
        &Op::MatMul(a, b) => {
            if needs(a) {
                let ga = g.matmul_t(val(b)).expect("shapes checked in forward");
                accumulate(nodes, grads, a, ga);
            }
            if needs(b) {
                let gb = val(a).t_matmul(g).expect("shapes checked in forward");
                accumulate(nodes, grads, b, gb);
            }
        }
        Op::SpMM(s, x) => {
            let gx = s.spmm_t(g).expect("shapes checked in forward");
            accumulate(nodes, grads, *x, gx);
        }
        &Op::Add(a, b) => {
            accumulate(nodes, grads, a, g.clone());
            accumulate(nodes, grads, b, g.clone());
        }
        &Op::Sub(a, b) => {
            accumulate(nodes, grads, a, g.clone());
            accumulate(nodes, grads, b, g.scale(-1.0));
        }
        &Op::Hadamard(a, b) => {
            if needs(a) {
                accumulate(nodes, grads, a, zip_map(g, val(b), |g, b| g * b));
            }
            if needs(b) {
                accumulate(nodes, grads, b, zip_map(g, val(a), |g, a| g * a));
            }
        }
        &Op::ConcatCols(a, b) => {
            let ca = val(a).cols();
            let cb = val(b).cols();
            let ga = g.cols_range(0, ca);
            let gb = g.cols_range(ca, ca + cb);
            accumulate(nodes, grads, a, ga);
            accumulate(nodes, grads, b, gb);
        }
        &Op::SliceCols(x, start) => {
            let (r, c) = val(x).shape();
            let w = g.cols();
            let gx = Matrix::from_fn(r, c, |i, j| {
                if j >= start && j < start + w {
                    g[(i, j - start)]
                } else {
                    0.0
                }
            });
            accumulate(nodes, grads, x, gx);
        }
        &Op::BroadcastCol(v, x) => {
            let xv = val(x);
            let vv = val(v);
            if needs(v) {
                let gv = Matrix::from_fn(g.rows(), 1, |i, _| dot(g.row(i), xv.row(i)));
                accumulate(nodes, grads, v, gv);
            }
            if needs(x) {
                let gx = g.scale_rows(vv.data());
                accumulate(nodes, grads, x, gx);
            }
        }
        &Op::AddRowBias(x, b) => {
            accumulate(nodes, grads, x, g.clone());
            if needs(b) {
                accumulate(nodes, grads, b, col_sums(g));
            }
        }
        &Op::MulRow(x, r) => {
            let xv = val(x);
            let rv = val(r);
            if needs(x) {
                let gx = g.map_with_row(rv.data(), |g, r| g * r);
                accumulate(nodes, grads, x, gx);
            }
            if needs(r) {
                accumulate(nodes, grads, r, col_sums(&zip_map(g, xv, |g, x| g * x)));
            }
        }
        &Op::ScaleVar(s, x) => {
            let sv = val(s)[(0, 0)];
            if needs(s) {
                let gs = dot(g.data(), val(x).data());
                accumulate(nodes, grads, s, Matrix::filled(1, 1, gs));
            }
            if needs(x) {
                accumulate(nodes, grads, x, g.scale(sv));
            }
        }
        &Op::Affine(x, a) => accumulate(nodes, grads, x, g.scale(a)),
        &Op::Relu(x) => {
            let gx = zip_map(g, val(x), |g, x| if x > 0.0 { g } else { 0.0 });
            accumulate(nodes, grads, x, gx);
        }
        &Op::Sigmoid(x) => accumulate(nodes, grads, x, zip_map(g, y, |g, y| g * y * (1.0 - y))),
        &Op::LeakyRelu(x, slope) => {
            let gx = zip_map(g, val(x), |g, x| if x > 0.0 { g } else { slope * g });
            accumulate(nodes, grads, x, gx);
        }
        &Op::LogSoftmaxRows(x) => {
            let mut gx = Matrix::zeros(g.rows(), g.cols());
            for i in 0..g.rows() {
                let gs: f64 = g.row(i).iter().sum();
                for ((o, &gi), &yi) in gx.row_mut(i).iter_mut().zip(g.row(i)).zip(y.row(i)) {
                    *o = gi - yi.exp() * gs;
                }
            }
            accumulate(nodes, grads, x, gx);
        }
        &Op::L2NormalizeRows(x) => {
            let xv = val(x);
            let mut gx = Matrix::zeros(g.rows(), g.cols());
            for i in 0..g.rows() {
                let norm = dot(xv.row(i), xv.row(i)).sqrt();
                if norm == 0.0 {
                    continue;
                }
                let yg = dot(y.row(i), g.row(i));
                for ((o, &gi), &yi) in gx.row_mut(i).iter_mut().zip(g.row(i)).zip(y.row(i)) {
                    *o = (gi - yi * yg) / norm;
                }
            }
            accumulate(nodes, grads, x, gx);
        }
        &Op::LayerNormRows(x, eps) => {
            let xv = val(x);
            let d = g.cols() as f64;
            let mut gx = Matrix::zeros(g.rows(), g.cols());
            for i in 0..g.rows() {
                let (_, var) = mean_var(xv.row(i));
                let inv = 1.0 / (var + eps).sqrt();
                let gm = g.row(i).iter().sum::<f64>() / d;
                let gy = dot(g.row(i), y.row(i)) / d;
                for ((o, &gi), &yi) in gx.row_mut(i).iter_mut().zip(g.row(i)).zip(y.row(i)) {
                    *o = inv * (gi - gm - yi * gy);
                }
            }
            accumulate(nodes, grads, x, gx);
        }
        Op::Dropout(x, mask) => {
            let gx = Matrix::from_vec(
                g.rows(),
                g.cols(),
                g.data().iter().zip(mask.iter()).map(|(g, m)| g * m).collect(),
            )
            .expect("mask matches shape");
            accumulate(nodes, grads, *x, gx);
        }
        &Op::Sum(x) => {
            let (r, c) = val(x).shape();
            accumulate(nodes, grads, x, Matrix::filled(r, c, g[(0, 0)]));
        }
        Op::MaskedCrossEntropy {
            logits,
            labels,
            mask,
        } => {
            let z = val(*logits);
            let scale = g[(0, 0)] / mask.len() as f64;
            let mut gx = Matrix::zeros(z.rows(), z.cols());
            for &i in mask.iter() {
                let row = z.row(i);
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = row.iter().map(|v| (v - m).exp()).sum();
                for (j, o) in gx.row_mut(i).iter_mut().enumerate() {
                    let p = (row[j] - m).exp() / s;
                    *o = scale * (p - if j == labels[i] { 1.0 } else { 0.0 });
                }
            }
            accumulate(nodes, grads, *logits, gx);
        }
        Op::EdgeAttention {
            structure,
            values,
            dst_score,
            src_score,
            slope,
            weights,
            logits,
        } => {
            let v = val(*values);
            let n = structure.rows();
            let idx = structure.indices();
            let mut gv = Matrix::zeros(v.rows(), v.cols());
            let mut gd = Matrix::zeros(n, 1);
            let mut gs = Matrix::zeros(v.rows(), 1);
            let mut gw = Vec::new();
            for i in 0..n {
                let range = structure.row_range(i);
                gw.clear();
                for e in range.clone() {
                    let j = idx[e];
                    gw.push(dot(g.row(i), v.row(j)));
                    if needs(*values) {
                        let w = weights[e];
                        for (o, &gi) in gv.row_mut(j).iter_mut().zip(g.row(i)) {
                            *o += w * gi;
                        }
                    }
                }
                let mean: f64 = range.clone().zip(&gw).map(|(e, gw)| weights[e] * gw).sum();
                for (e, gwe) in range.zip(&gw) {
                    let ge = weights[e] * (gwe - mean);
                    let gz = if logits[e] > 0.0 { ge } else { slope * ge };
                    gd[(i, 0)] += gz;
                    gs[(idx[e], 0)] += gz;
                }
            }
            accumulate(nodes, grads, *values, gv);
            accumulate(nodes, grads, *dst_score, gd);
            accumulate(nodes, grads, *src_score, gs);
        }
    }
}

/// Softmax attention weights and pre-activation scores for every stored
/// entry of `structure`.
pub fn attention_weights(
    structure: &SparseMatrix,
    dst_score: &[f64],
    src_score: &[f64],
    slope: f64,
) -> (Vec<f64>, Vec<f64>) {
    let idx = structure.indices();
    let mut weights = vec![0.0; structure.nnz()];
    let mut logits = vec![0.0; structure.nnz()];
    for i in 0..structure.rows() {
        let range = structure.row_range(i);
        if range.is_empty() {
            continue;
        }
        let mut max = f64::NEG_INFINITY;
        for e in range.clone() {
            let z = dst_score[i] + src_score[idx[e]];
            logits[e] = z;
            let a = if z > 0.0 { z } else { slope * z };
            weights[e] = a;
            max = max.max(a);
        }
        let mut total = 0.0;
        for e in range.clone() {
            weights[e] = (weights[e] - max).exp();
            total += weights[e];
        }
        for e in range {
            weights[e] /= total;
        }
    }
    (weights, logits)
}

fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    Matrix::from_vec(
        a.rows(),
        a.cols(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
    .expect("operands share a shape")
}

fn col_sums(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, m.cols());
    for i in 0..m.rows() {
        for (o, &x) in out.row_mut(0).iter_mut().zip(m.row(i)) {
            *o += x;
        }
    }
    out
}

fn mean_var(row: &[f64]) -> (f64, f64) {
    let d = row.len() as f64;
    let mean = row.iter().sum::<f64>() / d;
    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d;
    (mean, var)
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.value(self.id).shape()
    }

    pub fn value(&self) -> Ref<'t, Matrix> {
        self.tape.value(self.id)
    }

    pub fn to_matrix(&self) -> Matrix {
        self.value().clone()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.needs(self.id)
    }

    fn unary(self, out: Matrix, op: Op) -> Var<'t> {
        self.tape.push(out, op, self.requires_grad())
    }

    fn binary(self, other: Var<'t>, out: Matrix, op: Op) -> Var<'t> {
        let rg = self.requires_grad() || other.requires_grad();
        self.tape.push(out, op, rg)
    }

    fn same_shape(self, other: Var<'t>, op: &'static str) -> Result<()> {
        let (a, b) = (self.shape(), other.shape());
        if a != b {
            return Err(Error::Shape {
                op,
                left: a,
                right: b,
            });
        }
        Ok(())
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let out = self.value().matmul(&other.value())?;
        Ok(self.binary(other, out, Op::MatMul(self.id, other.id)))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_shape(other, "add")?;
        let out = zip_map(&self.value(), &other.value(), |a, b| a + b);
        Ok(self.binary(other, out, Op::Add(self.id, other.id)))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_shape(other, "sub")?;
        let out = zip_map(&self.value(), &other.value(), |a, b| a - b);
        Ok(self.binary(other, out, Op::Sub(self.id, other.id)))
    }

    pub fn hadamard(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_shape(other, "hadamard")?;
        let out = zip_map(&self.value(), &other.value(), |a, b| a * b);
        Ok(self.binary(other, out, Op::Hadamard(self.id, other.id)))
    }

    pub fn concat_cols(self, other: Var<'t>) -> Result<Var<'t>> {
        let out = {
            let a = self.value();
            let b = other.value();
            if a.rows() != b.rows() {
                return Err(Error::Shape {
                    op: "concat_cols",
                    left: a.shape(),
                    right: b.shape(),
                });
            }
            a.hcat(&b)?
        };
        Ok(self.binary(other, out, Op::ConcatCols(self.id, other.id)))
    }

    /// Columns `start..end`.
    pub fn slice_cols(self, start: usize, end: usize) -> Result<Var<'t>> {
        let out = {
            let x = self.value();
            if start > end || end > x.cols() {
                return Err(Error::Shape {
                    op: "slice_cols",
                    left: x.shape(),
                    right: (start, end),
                });
            }
            x.cols_range(start, end)
        };
        Ok(self.unary(out, Op::SliceCols(self.id, start)))
    }

    /// Scales row `i` of `x` by `self[i]`; `self` is N×1.
    pub fn broadcast_col(self, x: Var<'t>) -> Result<Var<'t>> {
        let out = {
            let v = self.value();
            let xv = x.value();
            if v.cols() != 1 || v.rows() != xv.rows() {
                return Err(Error::Shape {
                    op: "broadcast_col",
                    left: v.shape(),
                    right: xv.shape(),
                });
            }
            xv.scale_rows(v.data())
        };
        Ok(self.binary(x, out, Op::BroadcastCol(self.id, x.id)))
    }

    /// Adds the 1×d row `bias` to every row.
    pub fn add_row(self, bias: Var<'t>) -> Result<Var<'t>> {
        let out = {
            let x = self.value();
            let b = bias.value();
            if b.rows() != 1 || b.cols() != x.cols() {
                return Err(Error::Shape {
                    op: "add_row",
                    left: x.shape(),
                    right: b.shape(),
                });
            }
            x.map_with_row(b.data(), |x, b| x + b)
        };
        Ok(self.binary(bias, out, Op::AddRowBias(self.id, bias.id)))
    }

    /// Multiplies every row elementwise by the 1×d row `scale`.
    pub fn mul_row(self, scale: Var<'t>) -> Result<Var<'t>> {
        let out = {
            let x = self.value();
            let s = scale.value();
            if s.rows() != 1 || s.cols() != x.cols() {
                return Err(Error::Shape {
                    op: "mul_row",
                    left: x.shape(),
                    right: s.shape(),
                });
            }
            x.map_with_row(s.data(), |x, s| x * s)
        };
        Ok(self.binary(scale, out, Op::MulRow(self.id, scale.id)))
    }

    /// `self · x` where `self` is 1×1.
    pub fn scale_by(self, x: Var<'t>) -> Result<Var<'t>> {
        let out = {
            let s = self.value();
            if s.shape() != (1, 1) {
                return Err(Error::Shape {
                    op: "scale_by",
                    left: s.shape(),
                    right: x.shape(),
                });
            }
            x.value().scale(s[(0, 0)])
        };
        Ok(self.binary(x, out, Op::ScaleVar(self.id, x.id)))
    }

    /// `a · self + b` elementwise for constants `a`, `b`.
    pub fn affine(self, a: f64, b: f64) -> Var<'t> {
        let out = self.value().map(|x| a * x + b);
        self.unary(out, Op::Affine(self.id, a))
    }

    pub fn scale(self, a: f64) -> Var<'t> {
        self.affine(a, 0.0)
    }

    /// `1 - self`.
    pub fn one_minus(self) -> Var<'t> {
        self.affine(-1.0, 1.0)
    }

    pub fn relu(self) -> Var<'t> {
        let out = self.value().map(|x| x.max(0.0));
        self.unary(out, Op::Relu(self.id))
    }

    pub fn sigmoid(self) -> Var<'t> {
        let out = self.value().map(sigmoid);
        self.unary(out, Op::Sigmoid(self.id))
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'t> {
        let out = self.value().map(|x| if x > 0.0 { x } else { slope * x });
        self.unary(out, Op::LeakyRelu(self.id, slope))
    }

    pub fn log_softmax_rows(self) -> Var<'t> {
        let out = log_softmax_rows(&self.value());
        self.unary(out, Op::LogSoftmaxRows(self.id))
    }

    /// Unit Euclidean norm per row; exact-zero rows stay zero.
    pub fn l2_normalize_rows(self) -> Var<'t> {
        let out = l2_normalize_rows(&self.value());
        self.unary(out, Op::L2NormalizeRows(self.id))
    }

    /// Per-row standardization `(x - mean) / sqrt(var + eps)`.
    pub fn layer_norm_rows(self, eps: f64) -> Var<'t> {
        let out = {
            let x = self.value();
            let mut out = Matrix::zeros(x.rows(), x.cols());
            for i in 0..x.rows() {
                let (m, v) = mean_var(x.row(i));
                let inv = 1.0 / (v + eps).sqrt();
                for (o, &xi) in out.row_mut(i).iter_mut().zip(x.row(i)) {
                    *o = (xi - m) * inv;
                }
            }
            out
        };
        self.unary(out, Op::LayerNormRows(self.id, eps))
    }

    /// Inverted dropout; the identity when not training or `p == 0`.
    pub fn dropout(self, p: f64, training: bool, seed: u64) -> Var<'t> {
        if !training || p <= 0.0 {
            return self;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (1.0 - p);
        let (r, c) = self.shape();
        let mask: Vec<f64> = (0..r * c)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { scale })
            .collect();
        let out = Matrix::from_vec(
            r,
            c,
            self.value().data().iter().zip(&mask).map(|(x, m)| x * m).collect(),
        )
        .expect("mask sized to input");
        self.unary(out, Op::Dropout(self.id, Rc::new(mask)))
    }

    /// Sum of all entries as a 1×1 value.
    pub fn sum(self) -> Var<'t> {
        let s = self.value().sum();
        self.unary(Matrix::filled(1, 1, s), Op::Sum(self.id))
    }

    /// Mean over `mask` rows of `-log softmax(self)[label]`.
    pub fn masked_cross_entropy(self, labels: &[usize], mask: &[usize]) -> Result<Var<'t>> {
        if mask.is_empty() {
            return Err(Error::invalid("cross-entropy mask is empty"));
        }
        let loss = {
            let z = self.value();
            if labels.len() != z.rows() {
                return Err(Error::Shape {
                    op: "masked_cross_entropy",
                    left: z.shape(),
                    right: (labels.len(), 1),
                });
            }
            let mut total = 0.0;
            for &i in mask {
                if i >= z.rows() || labels[i] >= z.cols() {
                    return Err(Error::invalid(format!("mask index {i} or its label out of range")));
                }
                let row = z.row(i);
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                total += lse - row[labels[i]];
            }
            total / mask.len() as f64
        };
        Ok(self.unary(
            Matrix::filled(1, 1, loss),
            Op::MaskedCrossEntropy {
                logits: self.id,
                labels: labels.into(),
                mask: mask.into(),
            },
        ))
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_softmax_rows(x: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        let row = x.row(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        for (o, &v) in out.row_mut(i).iter_mut().zip(row) {
            *o = v - lse;
        }
    }
    out
}

pub fn l2_normalize_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for i in 0..x.rows() {
        let norm = dot(x.row(i), x.row(i)).sqrt();
        if norm > 0.0 {
            out.row_mut(i).iter_mut().for_each(|v| *v /= norm);
        }
    }
    out
}
