//! Graph convolution kernels as compositions of tape operations. None of
//! these apply an output nonlinearity; callers decide.

use std::sync::Arc;

use crate::autodiff::{SparseMatrix, Tape, Var};
use crate::error::Result;

/// GAT LeakyReLU slope.
pub const GAT_SLOPE: f64 = 0.2;

/// Layer input: either a tape value or a constant sparse feature matrix.
#[derive(Clone, Copy)]
pub enum Input<'a, 't> {
    Dense(Var<'t>),
    Sparse(&'a Arc<SparseMatrix>),
}

impl<'t> Input<'_, 't> {
    /// `input · w`.
    pub fn project(self, tape: &'t Tape, w: Var<'t>) -> Result<Var<'t>> {
        match self {
            Input::Dense(h) => h.matmul(w),
            Input::Sparse(x) => tape.spmm(x, w),
        }
    }
}

/// `P · (H · W)`.
pub fn gcn_layer<'t>(tape: &'t Tape, p: &Arc<SparseMatrix>, h: Input<'_, 't>, w: Var<'t>) -> Result<Var<'t>> {
    let hw = h.project(tape, w)?;
    tape.spmm(p, hw)
}

#[derive(Clone, Copy)]
pub struct GinParams<'t> {
    pub w1: Var<'t>,
    pub b1: Var<'t>,
    pub w2: Var<'t>,
    pub b2: Var<'t>,
    /// 1×1
    pub eps: Var<'t>,
}

/// `MLP((1 + ε) H + A H)` with a two-layer ReLU MLP. The first linear map
/// is distributed over the sum, `((1 + ε) H + A H) W₁ = (1 + ε) H W₁ + A (H W₁)`,
/// so sparse inputs never densify.
pub fn gin_layer<'t>(tape: &'t Tape, adj: &Arc<SparseMatrix>, h: Input<'_, 't>, p: GinParams<'t>) -> Result<Var<'t>> {
    let hw = h.project(tape, p.w1)?;
    let self_term = p.eps.affine(1.0, 1.0).scale_by(hw)?;
    let agg = tape.spmm(adj, hw)?;
    let hidden = self_term.add(agg)?.add_row(p.b1)?.relu();
    hidden.matmul(p.w2)?.add_row(p.b2)
}

#[derive(Clone, Copy)]
pub struct GatParams<'t> {
    pub w: Var<'t>,
    /// Scores the center node, d×1.
    pub a_dst: Var<'t>,
    /// Scores the neighbor, d×1.
    pub a_src: Var<'t>,
}

/// Single-head attention over `N(i) ∪ {i}`:
/// `e_ij = LeakyReLU(a_dstᵀ W h_i + a_srcᵀ W h_j)`, softmax over `j`, output
/// `Σ_j α_ij W h_j`. `structure` must contain the self-loops.
pub fn gat_layer<'t>(tape: &'t Tape, structure: &Arc<SparseMatrix>, h: Input<'_, 't>, p: GatParams<'t>) -> Result<Var<'t>> {
    let wh = h.project(tape, p.w)?;
    let dst = wh.matmul(p.a_dst)?;
    let src = wh.matmul(p.a_src)?;
    tape.edge_attention(structure, wh, dst, src, GAT_SLOPE)
}
