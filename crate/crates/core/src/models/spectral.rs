//! The gated model without weights and with linear normalization collapses
//! to a polynomial filter. With `S⁰ = γ⁰ X`, `Hˡ = P Hˡ⁻¹` and
//! `Sˡ = (1 - αˡ) Sˡ⁻¹ + αˡ γˡ Hˡ`, the output after `K` layers is
//! `Σₗ θˡ Pˡ X` with per-node coefficients
//! `θˡ = γˡ αˡ Πₖ₌ₗ₊₁..ₖ (1 - αᵏ)` and `α⁰ = 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::SparseMatrix;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::Matrix;

/// One random configuration for the recursion-versus-filter comparison.
#[derive(Clone, Debug)]
pub struct SpectralInstance {
    pub p: SparseMatrix,
    pub x: Matrix,
    /// `alphas[l - 1][i]` is `αˡ` at node `i`, for `l = 1..=K`.
    pub alphas: Vec<Vec<f64>>,
    /// `γ⁰..γᴷ`.
    pub gammas: Vec<f64>,
}

impl SpectralInstance {
    /// Erdős–Rényi graph with edge probability 0.3, non-negative features,
    /// gates in `(0, 1)` and scales in `[0.5, 2]`.
    pub fn random(nodes: usize, features: usize, order: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for u in 0..nodes {
            for v in (u + 1)..nodes {
                if rng.random::<f64>() < 0.3 {
                    edges.push((u, v));
                }
            }
        }
        let g = Graph::from_edges(nodes, &edges)?;
        let x = Matrix::from_fn(nodes, features, |_, _| rng.random::<f64>());
        let alphas = (0..order)
            .map(|_| (0..nodes).map(|_| rng.random_range(0.01..0.99)).collect())
            .collect();
        let gammas = (0..=order).map(|_| rng.random_range(0.5..2.0)).collect();
        Ok(Self {
            p: super::normalized_adjacency(&g),
            x,
            alphas,
            gammas,
        })
    }

    pub fn check(&self) -> Result<f64> {
        spectral_check(&self.p, &self.x, &self.alphas, &self.gammas)
    }
}

fn validate(p: &SparseMatrix, x: &Matrix, alphas: &[Vec<f64>], gammas: &[f64]) -> Result<()> {
    let n = x.rows();
    if p.shape() != (n, n) {
        return Err(Error::Shape {
            op: "spectral check",
            left: p.shape(),
            right: x.shape(),
        });
    }
    if gammas.len() != alphas.len() + 1 {
        return Err(Error::Invalid(format!(
            "{} gate layers need {} scales, got {}",
            alphas.len(),
            alphas.len() + 1,
            gammas.len()
        )));
    }
    if alphas.iter().any(|a| a.len() != n) {
        return Err(Error::Invalid(format!("every gate layer needs {n} entries")));
    }
    Ok(())
}

/// The layer-by-layer recursion.
pub fn recursive_output(p: &SparseMatrix, x: &Matrix, alphas: &[Vec<f64>], gammas: &[f64]) -> Result<Matrix> {
    validate(p, x, alphas, gammas)?;
    let mut s = x.scale(gammas[0]);
    let mut h = x.clone();
    for (l, alpha) in alphas.iter().enumerate() {
        h = p.spmm(&h)?;
        let gamma = gammas[l + 1];
        for i in 0..s.rows() {
            let a = alpha[i];
            let hi = h.row(i).to_vec();
            for (sv, hv) in s.row_mut(i).iter_mut().zip(hi) {
                *sv = (1.0 - a) * *sv + a * gamma * hv;
            }
        }
    }
    Ok(s)
}

/// Per-node filter coefficients `θ⁰..θᴷ`.
pub fn filter_coefficients(alphas: &[Vec<f64>], gammas: &[f64], nodes: usize) -> Vec<Vec<f64>> {
    let k = alphas.len();
    (0..=k)
        .map(|l| {
            (0..nodes)
                .map(|i| {
                    let a_l = if l == 0 { 1.0 } else { alphas[l - 1][i] };
                    let tail: f64 = alphas[l..].iter().map(|a| 1.0 - a[i]).product();
                    gammas[l] * a_l * tail
                })
                .collect()
        })
        .collect()
}

/// `Σₗ diag(θˡ) Pˡ X` using dense powers of `P`.
pub fn closed_form_output(p: &SparseMatrix, x: &Matrix, alphas: &[Vec<f64>], gammas: &[f64]) -> Result<Matrix> {
    validate(p, x, alphas, gammas)?;
    let n = x.rows();
    let dense_p = p.to_dense();
    let thetas = filter_coefficients(alphas, gammas, n);
    let mut power = Matrix::identity(n);
    let mut out = Matrix::zeros(n, x.cols());
    for (l, theta) in thetas.iter().enumerate() {
        if l > 0 {
            power = dense_p.matmul(&power)?;
        }
        let term = power.matmul(x)?;
        for i in 0..n {
            for (o, t) in out.row_mut(i).iter_mut().zip(term.row(i)) {
                *o += theta[i] * t;
            }
        }
    }
    Ok(out)
}

/// Maximum absolute difference between the recursion and the closed form.
pub fn spectral_check(p: &SparseMatrix, x: &Matrix, alphas: &[Vec<f64>], gammas: &[f64]) -> Result<f64> {
    let a = recursive_output(p, x, alphas, gammas)?;
    let b = closed_form_output(p, x, alphas, gammas)?;
    Ok(a.max_abs_diff(&b))
}
