//! Label-based graph measurements: node/edge homophily ratios, the
//! singular-value entropy of class-level neighbor label distributions, and
//! Kendall rank correlation.

mod kendall;

pub use kendall::{kendall_tau, KendallResult};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{class_sizes, Graph};
use crate::linalg::{singular_values_gram, Matrix};

/// How rows of the neighbor label matrix are formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowWeighting {
    /// Row-normalized histogram (each non-isolated row sums to 1).
    #[default]
    Distribution,
    /// Raw neighbor-label counts.
    Counts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub h_node: f64,
    pub h_edge: f64,
    pub h_neighbor: f64,
    pub per_class_entropy: Vec<f64>,
    pub class_sizes: Vec<usize>,
    pub num_nodes: usize,
    pub undirected_edges: usize,
    pub directed_edges: usize,
    pub row_weighting: RowWeighting,
}

impl MetricReport {
    /// Re-derives `h_neighbor` from the stored per-class values.
    pub fn weighted_entropy(&self) -> f64 {
        weighted_mean(&self.per_class_entropy, &self.class_sizes)
    }
}

fn weighted_mean(values: &[f64], sizes: &[usize]) -> f64 {
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return 0.0;
    }
    values
        .iter()
        .zip(sizes)
        .map(|(h, &s)| s as f64 / n as f64 * h)
        .sum()
}

fn check_labels(g: &Graph, labels: &[usize], num_classes: usize) -> Result<()> {
    if labels.len() != g.num_nodes() {
        return Err(Error::invalid(format!(
            "{} labels for {} nodes",
            labels.len(),
            g.num_nodes()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::invalid(format!("label {l} out of range for {num_classes} classes")));
    }
    Ok(())
}

/// Mean over all nodes of the fraction of same-label neighbors. Isolated
/// nodes contribute 0 but still count in the denominator.
pub fn homophily_node(g: &Graph, labels: &[usize]) -> f64 {
    let n = g.num_nodes();
    if n == 0 {
        return 0.0;
    }
    let total: f64 = (0..n)
        .filter(|&v| g.degree(v) > 0)
        .map(|v| {
            let same = g.neighbors(v).iter().filter(|&&u| labels[u] == labels[v]).count();
            same as f64 / g.degree(v) as f64
        })
        .sum();
    total / n as f64
}

/// Fraction of undirected edges whose endpoints share a label.
pub fn homophily_edge(g: &Graph, labels: &[usize]) -> Result<f64> {
    let m = g.undirected_edge_count();
    if m == 0 {
        return Err(Error::invalid("edge homophily is undefined on an empty edge set"));
    }
    let same = g.edges().filter(|&(u, v)| labels[u] == labels[v]).count();
    Ok(same as f64 / m as f64)
}

/// Neighbor label matrix for the nodes of one class.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborDistMatrix {
    pub class_id: usize,
    /// Node ids in row order.
    pub nodes: Vec<usize>,
    pub rows: Matrix,
}

fn neighbor_histogram(g: &Graph, labels: &[usize], v: usize, out: &mut [f64], weighting: RowWeighting) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for &u in g.neighbors(v) {
        out[labels[u]] += 1.0;
    }
    let d = g.degree(v);
    if weighting == RowWeighting::Distribution && d > 0 {
        out.iter_mut().for_each(|x| *x /= d as f64);
    }
}

pub fn neighbor_dist_matrix(
    g: &Graph,
    labels: &[usize],
    num_classes: usize,
    class_id: usize,
) -> Result<NeighborDistMatrix> {
    neighbor_matrix_weighted(g, labels, num_classes, class_id, RowWeighting::Distribution)
}

pub fn neighbor_matrix_weighted(
    g: &Graph,
    labels: &[usize],
    num_classes: usize,
    class_id: usize,
    weighting: RowWeighting,
) -> Result<NeighborDistMatrix> {
    check_labels(g, labels, num_classes)?;
    let nodes: Vec<usize> = (0..g.num_nodes()).filter(|&v| labels[v] == class_id).collect();
    if nodes.is_empty() {
        return Err(Error::invalid(format!("class {class_id} has no nodes")));
    }
    let mut rows = Matrix::zeros(nodes.len(), num_classes);
    for (r, &v) in nodes.iter().enumerate() {
        neighbor_histogram(g, labels, v, rows.row_mut(r), weighting);
    }
    Ok(NeighborDistMatrix {
        class_id,
        nodes,
        rows,
    })
}

/// Shannon entropy of the normalized singular-value spectrum, divided by
/// `ln(C)` where `C` is the column count. Zero for an all-zero matrix.
pub fn spectrum_entropy(singular_values: &[f64], num_classes: usize) -> f64 {
    let total: f64 = singular_values.iter().sum();
    if total <= 0.0 || num_classes < 2 {
        return 0.0;
    }
    let plogp: f64 = singular_values
        .iter()
        .map(|&s| s / total)
        .filter(|&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum();
    // subtracting from +0 keeps a single-value spectrum at +0 rather than -0
    let h = 0.0 - plogp;
    (h / (num_classes as f64).ln()).clamp(0.0, 1.0)
}

pub fn class_neighbor_entropy(m: &NeighborDistMatrix) -> f64 {
    matrix_entropy(&m.rows)
}

/// Singular-value entropy of an arbitrary `n × C` matrix.
pub fn matrix_entropy(rows: &Matrix) -> f64 {
    let sv = singular_values_gram(rows).expect("Gram matrix is square");
    spectrum_entropy(&sv, rows.cols())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborEntropy {
    pub h_neighbor: f64,
    pub per_class: Vec<f64>,
    pub class_sizes: Vec<usize>,
}

/// Class-size-weighted mean of per-class neighbor entropies. Empty classes
/// get entropy 0 and weight 0.
pub fn neighbor_entropy(g: &Graph, labels: &[usize], num_classes: usize) -> Result<NeighborEntropy> {
    neighbor_entropy_weighted(g, labels, num_classes, RowWeighting::Distribution)
}

pub fn neighbor_entropy_weighted(
    g: &Graph,
    labels: &[usize],
    num_classes: usize,
    weighting: RowWeighting,
) -> Result<NeighborEntropy> {
    if num_classes < 2 {
        return Err(Error::invalid("neighbor entropy needs at least 2 classes"));
    }
    check_labels(g, labels, num_classes)?;
    let sizes = class_sizes(labels, num_classes);

    // accumulate the C x C Gram matrix of every class in one pass
    let mut grams = vec![Matrix::zeros(num_classes, num_classes); num_classes];
    let mut hist = vec![0.0; num_classes];
    for v in 0..g.num_nodes() {
        neighbor_histogram(g, labels, v, &mut hist, weighting);
        let gram = &mut grams[labels[v]];
        for a in 0..num_classes {
            if hist[a] == 0.0 {
                continue;
            }
            for b in 0..num_classes {
                gram[(a, b)] += hist[a] * hist[b];
            }
        }
    }
    let per_class: Vec<f64> = grams
        .iter()
        .map(|gram| {
            let eig = crate::linalg::jacobi_eigen(gram, 1e-12).expect("square Gram matrix");
            spectrum_entropy(&crate::linalg::singular_values_from_gram(&eig.values), num_classes)
        })
        .collect();
    Ok(NeighborEntropy {
        h_neighbor: weighted_mean(&per_class, &sizes),
        per_class,
        class_sizes: sizes,
    })
}

pub fn metric_report(
    g: &Graph,
    labels: &[usize],
    num_classes: usize,
    weighting: RowWeighting,
) -> Result<MetricReport> {
    check_labels(g, labels, num_classes)?;
    let ent = neighbor_entropy_weighted(g, labels, num_classes, weighting)?;
    Ok(MetricReport {
        h_node: homophily_node(g, labels),
        h_edge: homophily_edge(g, labels)?,
        h_neighbor: ent.h_neighbor,
        per_class_entropy: ent.per_class,
        class_sizes: ent.class_sizes,
        num_nodes: g.num_nodes(),
        undirected_edges: g.undirected_edge_count(),
        directed_edges: g.directed_edge_count(),
        row_weighting: weighting,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_edge_homophily() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let h = homophily_edge(&g, &[0, 0, 1]).unwrap();
        assert!((h - 1.0 / 3.0).abs() < 1e-15);
        // node 0: 1/2, node 1: 1/2, node 2: 0
        assert!((homophily_node(&g, &[0, 0, 1]) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn isolated_nodes_count_in_denominator() {
        let g = Graph::from_edges(3, &[(0, 1)]).unwrap();
        assert!((homophily_node(&g, &[0, 0, 0]) - 2.0 / 3.0).abs() < 1e-15);
        assert!(homophily_edge(&Graph::empty(2), &[0, 1]).is_err());
    }

    #[test]
    fn star_histogram() {
        // center 0 (class 0) with leaves of classes 1, 1, 2
        let g = Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let m = neighbor_dist_matrix(&g, &[0, 1, 1, 2], 3, 0).unwrap();
        assert_eq!(m.rows.shape(), (1, 3));
        let r = m.rows.row(0);
        assert_eq!(r[0], 0.0);
        assert!((r[1] - 2.0 / 3.0).abs() < 1e-15 && (r[2] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_class_rejected() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        assert!(neighbor_dist_matrix(&g, &[0, 0], 3, 2).is_err());
    }

    #[test]
    fn entropy_extremes() {
        let rank1 = Matrix::from_rows(&[vec![0.2, 0.8], vec![0.2, 0.8], vec![0.2, 0.8]]).unwrap();
        assert!(matrix_entropy(&rank1).abs() < 1e-12);
        let id = Matrix::identity(4);
        assert!((matrix_entropy(&id) - 1.0).abs() < 1e-12);
        assert_eq!(matrix_entropy(&Matrix::zeros(3, 3)), 0.0);
    }

    #[test]
    fn gram_path_matches_matrix_path() {
        let g = Graph::from_edges(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 3), (1, 4)]).unwrap();
        let labels = [0, 1, 2, 0, 1, 2];
        let ent = neighbor_entropy(&g, &labels, 3).unwrap();
        for k in 0..3 {
            let m = neighbor_dist_matrix(&g, &labels, 3, k).unwrap();
            assert!((class_neighbor_entropy(&m) - ent.per_class[k]).abs() < 1e-12);
        }
    }
}
