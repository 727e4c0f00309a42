use std::sync::Arc;

use super::Kernel;
use crate::autodiff::SparseMatrix;
use crate::graph::Graph;

/// Propagation operator for a kernel.
///
/// - `gcn`: `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degrees of `A + I`
/// - `gin`: the plain adjacency `A` (the self term is `(1 + ε) h`)
/// - `gat`: the pattern of `A + I` with unit values; weights come from attention
/// - `mlp`: identity
pub fn build_propagation(g: &Graph, kernel: Kernel) -> Arc<SparseMatrix> {
    let n = g.num_nodes();
    let m = match kernel {
        Kernel::Gcn => {
            let inv_sqrt: Vec<f64> = (0..n).map(|v| 1.0 / ((g.degree(v) + 1) as f64).sqrt()).collect();
            with_self_loops(g, |u, v| inv_sqrt[u] * inv_sqrt[v])
        }
        Kernel::Gat => with_self_loops(g, |_, _| 1.0),
        Kernel::Gin => {
            let offsets = g.offsets().to_vec();
            let targets = g.targets().to_vec();
            let values = vec![1.0; targets.len()];
            SparseMatrix::from_csr(n, n, offsets, targets, values).expect("graph CSR is valid")
        }
        Kernel::Mlp => SparseMatrix::identity(n),
    };
    Arc::new(m)
}

fn with_self_loops(g: &Graph, weight: impl Fn(usize, usize) -> f64) -> SparseMatrix {
    let n = g.num_nodes();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut indices = Vec::with_capacity(g.directed_edge_count() + n);
    let mut values = Vec::with_capacity(g.directed_edge_count() + n);
    offsets.push(0);
    for u in 0..n {
        let nbrs = g.neighbors(u);
        let split = nbrs.partition_point(|&v| v < u);
        for &v in nbrs[..split].iter().chain(std::iter::once(&u)).chain(&nbrs[split..]) {
            indices.push(v);
            values.push(weight(u, v));
        }
        offsets.push(indices.len());
    }
    SparseMatrix::from_csr(n, n, offsets, indices, values).expect("sorted CSR with self-loops")
}

/// `D^{-1/2} A D^{-1/2}` without self-loops; isolated nodes get empty rows.
pub fn normalized_adjacency(g: &Graph) -> SparseMatrix {
    let n = g.num_nodes();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|v| match g.degree(v) {
            0 => 0.0,
            d => 1.0 / (d as f64).sqrt(),
        })
        .collect();
    let mut values = Vec::with_capacity(g.directed_edge_count());
    for u in 0..n {
        for &v in g.neighbors(u) {
            values.push(inv_sqrt[u] * inv_sqrt[v]);
        }
    }
    SparseMatrix::from_csr(n, n, g.offsets().to_vec(), g.targets().to_vec(), values)
        .expect("graph CSR is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    #[test]
    fn isolated_node_gets_unit_self_loop() {
        let p = build_propagation(&Graph::empty(1), Kernel::Gcn);
        assert_eq!(p.to_dense(), Matrix::identity(1));
    }

    #[test]
    fn single_edge_halves() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let p = build_propagation(&g, Kernel::Gcn).to_dense();
        for i in 0..2 {
            for j in 0..2 {
                assert!((p[(i, j)] - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gcn_matches_dense_construction() {
        let g = Graph::from_edges(8, &[(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (5, 6), (1, 6), (4, 6)]).unwrap();
        let p = build_propagation(&g, Kernel::Gcn).to_dense();
        // dense oracle: Ã = A + I, D̃ = rowsum(Ã), P = D̃^{-1/2} Ã D̃^{-1/2}
        let mut a = Matrix::identity(8);
        for (u, v) in g.edges() {
            a[(u, v)] = 1.0;
            a[(v, u)] = 1.0;
        }
        let deg: Vec<f64> = (0..8).map(|i| a.row(i).iter().sum()).collect();
        let oracle = Matrix::from_fn(8, 8, |i, j| a[(i, j)] / (deg[i] * deg[j]).sqrt());
        assert!(p.max_abs_diff(&oracle) < 1e-15);
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(p[(i, j)], p[(j, i)]);
            }
        }
    }

    #[test]
    fn gat_structure_includes_self() {
        let g = Graph::from_edges(3, &[(0, 2)]).unwrap();
        let s = build_propagation(&g, Kernel::Gat);
        assert_eq!(s.indices(), &[0, 2, 1, 0, 2]);
        let gin = build_propagation(&g, Kernel::Gin);
        assert_eq!(gin.indices(), &[2, 0]);
    }
}
