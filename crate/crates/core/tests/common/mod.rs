//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use cagnn_core::{Graph, Matrix};
use nalgebra::DMatrix;
use statrs::function::erf::erfc;

/// Kendall tau-b and two-sided p-value by direct pair counting.
///
/// Small samples (n <= 10) enumerate all n! reorderings of `ys`; larger ones
/// use the tie-corrected normal approximation.
pub fn brute_kendall(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let pairs = |ys: &[f64]| {
        let (mut conc, mut disc, mut tie_x, mut tie_y) = (0i64, 0i64, 0i64, 0i64);
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = xs[i] - xs[j];
                let dy = ys[i] - ys[j];
                if dx == 0.0 {
                    tie_x += 1;
                }
                if dy == 0.0 {
                    tie_y += 1;
                }
                if dx * dy > 0.0 {
                    conc += 1;
                } else if dx * dy < 0.0 {
                    disc += 1;
                }
            }
        }
        (conc - disc, tie_x, tie_y)
    };
    let (s, tie_x, tie_y) = pairs(ys);
    let n0 = (n * (n - 1) / 2) as f64;
    let tau = s as f64 / ((n0 - tie_x as f64) * (n0 - tie_y as f64)).sqrt();

    let p = if n <= 10 {
        let mut hits = 0u64;
        let mut total = 0u64;
        let mut idx: Vec<usize> = (0..n).collect();
        permutations(&mut idx, 0, &mut |perm| {
            let permuted: Vec<f64> = perm.iter().map(|&i| ys[i]).collect();
            total += 1;
            if pairs(&permuted).0.abs() >= s.abs() {
                hits += 1;
            }
        });
        hits as f64 / total as f64
    } else {
        let groups = |v: &[f64]| {
            let mut m: HashMap<u64, f64> = HashMap::new();
            for x in v {
                *m.entry(x.to_bits()).or_default() += 1.0;
            }
            m.into_values().collect::<Vec<f64>>()
        };
        let (gx, gy) = (groups(xs), groups(ys));
        let nf = n as f64;
        let sum = |g: &[f64], f: &dyn Fn(f64) -> f64| g.iter().map(|&t| f(t)).sum::<f64>();
        let var = (nf * (nf - 1.0) * (2.0 * nf + 5.0)
            - sum(&gx, &|t| t * (t - 1.0) * (2.0 * t + 5.0))
            - sum(&gy, &|t| t * (t - 1.0) * (2.0 * t + 5.0)))
            / 18.0
            + sum(&gx, &|t| t * (t - 1.0) * (t - 2.0)) * sum(&gy, &|t| t * (t - 1.0) * (t - 2.0))
                / (9.0 * nf * (nf - 1.0) * (nf - 2.0))
            + sum(&gx, &|t| t * (t - 1.0)) * sum(&gy, &|t| t * (t - 1.0)) / (2.0 * nf * (nf - 1.0));
        erfc((s as f64).abs() / var.sqrt() / std::f64::consts::SQRT_2)
    };
    (tau, p.min(1.0))
}

fn permutations(idx: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == idx.len() {
        visit(idx);
        return;
    }
    for i in k..idx.len() {
        idx.swap(k, i);
        permutations(idx, k + 1, visit);
        idx.swap(k, i);
    }
}

/// Normalized singular-value entropy computed from a direct SVD.
pub fn svd_entropy(m: &Matrix) -> f64 {
    let dm = DMatrix::from_row_slice(m.rows(), m.cols(), m.data());
    let sv = dm.singular_values();
    let total: f64 = sv.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    let h: f64 = sv.iter().map(|s| s / total).filter(|&p| p > 0.0).map(|p| -p * p.ln()).sum();
    h / (m.cols() as f64).ln()
}

/// Row-normalized neighbor label histograms of the nodes in class `k`.
pub fn class_rows(g: &Graph, labels: &[usize], c: usize, k: usize) -> Matrix {
    let rows: Vec<Vec<f64>> = (0..g.num_nodes())
        .filter(|&v| labels[v] == k)
        .map(|v| {
            let mut h = vec![0.0; c];
            for &u in g.neighbors(v) {
                h[labels[u]] += 1.0;
            }
            let d = g.degree(v).max(1) as f64;
            h.iter().map(|x| x / d).collect()
        })
        .collect();
    Matrix::from_rows(&rows).unwrap()
}

/// Dense `D̃^{-1/2} (A + I) D̃^{-1/2}`.
pub fn dense_gcn_propagation(g: &Graph) -> Matrix {
    let n = g.num_nodes();
    let mut a = Matrix::identity(n);
    for (u, v) in g.edges() {
        a[(u, v)] = 1.0;
        a[(v, u)] = 1.0;
    }
    let d: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
    Matrix::from_fn(n, n, |i, j| a[(i, j)] / (d[i] * d[j]).sqrt())
}

pub fn l2_rows(m: &Matrix) -> Matrix {
    let norms: Vec<f64> = (0..m.rows()).map(|i| m.row(i).iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    Matrix::from_fn(m.rows(), m.cols(), |i, j| if norms[i] > 0.0 { m[(i, j)] / norms[i] } else { 0.0 })
}

pub fn add_bias(m: &Matrix, b: &Matrix) -> Matrix {
    Matrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)] + b[(0, j)])
}
