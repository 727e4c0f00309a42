//! Undirected graphs in CSR form, node tables, splits and dataset bundles.

mod bundle;
mod perturb;
mod synth;

pub use bundle::{load_bundle, save_bundle, BundleMeta};
pub use perturb::add_random_edges;
pub use synth::{make_synthetic, pattern_matrix, SyntheticKind, SyntheticParams};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Immutable undirected simple graph. Every edge is stored in both
/// directions; neighbor lists are sorted and free of duplicates and
/// self-loops.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Graph {
    /// Builds a graph from arbitrary (possibly directed, duplicated or
    /// self-looping) pairs. Pairs are symmetrized, deduplicated and
    /// self-loops dropped.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for &(u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::invalid(format!(
                    "edge ({u}, {v}) out of range for {num_nodes} nodes"
                )));
            }
            if u == v {
                continue;
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        Ok(Self::from_adjacency(adj))
    }

    fn from_adjacency(mut adj: Vec<Vec<usize>>) -> Self {
        let mut offsets = Vec::with_capacity(adj.len() + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            targets.extend_from_slice(list);
            offsets.push(targets.len());
        }
        Self { offsets, targets }
    }

    /// Raw CSR arrays; `validate` re-checks every structural invariant.
    pub fn from_csr(offsets: Vec<usize>, targets: Vec<usize>) -> Result<Self> {
        let g = Self { offsets, targets };
        g.validate()?;
        Ok(g)
    }

    pub fn empty(num_nodes: usize) -> Self {
        Self {
            offsets: vec![0; num_nodes + 1],
            targets: Vec::new(),
        }
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges (each stored twice in CSR).
    #[inline]
    pub fn undirected_edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    /// Number of stored directed entries, `2 * undirected_edge_count`.
    #[inline]
    pub fn directed_edge_count(&self) -> usize {
        self.targets.len()
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Undirected edges as `(u, v)` with `u < v`, in CSR order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.offsets.len().checked_sub(1).ok_or_else(|| {
            Error::invalid("CSR offsets must have at least one entry")
        })?;
        if self.offsets[0] != 0 || *self.offsets.last().unwrap() != self.targets.len() {
            return Err(Error::invalid("CSR offsets do not span the target array"));
        }
        for v in 0..n {
            if self.offsets[v] > self.offsets[v + 1] {
                return Err(Error::invalid(format!("CSR offsets decrease at node {v}")));
            }
            let nbrs = self.neighbors(v);
            for w in nbrs.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::invalid(format!(
                        "neighbor list of {v} not strictly increasing"
                    )));
                }
            }
            for &u in nbrs {
                if u >= n {
                    return Err(Error::invalid(format!("neighbor {u} of {v} out of range")));
                }
                if u == v {
                    return Err(Error::invalid(format!("self-loop at {v}")));
                }
                if !self.has_edge(u, v) {
                    return Err(Error::invalid(format!("edge ({v}, {u}) has no reverse")));
                }
            }
        }
        Ok(())
    }

    /// New graph with node `v` renamed to `perm[v]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.num_nodes())?;
        let mut adj = vec![Vec::new(); self.num_nodes()];
        for u in 0..self.num_nodes() {
            adj[perm[u]] = self.neighbors(u).iter().map(|&v| perm[v]).collect();
        }
        Ok(Self::from_adjacency(adj))
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::invalid("permutation length mismatch"));
    }
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::invalid("not a permutation"));
        }
    }
    Ok(())
}

/// Node features and labels.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeTable {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl NodeTable {
    pub fn new(features: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let t = Self {
            features,
            labels,
            num_classes,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::invalid("num_classes must be at least 2"));
        }
        if self.features.rows() != self.labels.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} labels",
                self.features.rows(),
                self.labels.len()
            )));
        }
        if let Some((i, &l)) = self
            .labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l >= self.num_classes)
        {
            return Err(Error::invalid(format!(
                "label out of range: node {i} has class {l} >= {}",
                self.num_classes
            )));
        }
        Ok(())
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        class_sizes(&self.labels, self.num_classes)
    }
}

pub fn class_sizes(labels: &[usize], num_classes: usize) -> Vec<usize> {
    let mut sizes = vec![0; num_classes];
    for &l in labels {
        sizes[l] += 1;
    }
    sizes
}

/// One train/validation/test partition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (name, set) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &i in set {
                if i >= num_nodes {
                    return Err(Error::invalid(format!(
                        "{name} index {i} out of range for {num_nodes} nodes"
                    )));
                }
                if !seen.insert(i) {
                    return Err(Error::invalid(format!(
                        "node {i} appears twice across split sets"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SplitSet {
    pub splits: Vec<Split>,
}

impl SplitSet {
    pub fn len(&self) -> usize {
        self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }
}

/// Per-class stratified split with the given train/val fractions; the
/// remainder goes to test.
pub fn stratified_split(
    labels: &[usize],
    num_classes: usize,
    train_frac: f64,
    val_frac: f64,
    rng: &mut impl rand::Rng,
) -> Split {
    use rand::seq::SliceRandom;
    let mut split = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for k in 0..num_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == k).collect();
        members.shuffle(rng);
        let n = members.len();
        let n_train = (train_frac * n as f64).round() as usize;
        let n_val = ((val_frac * n as f64).round() as usize).min(n - n_train);
        split.train.extend_from_slice(&members[..n_train]);
        split.val.extend_from_slice(&members[n_train..n_train + n_val]);
        split.test.extend_from_slice(&members[n_train + n_val..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    split
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub name: String,
    pub graph: Graph,
    pub nodes: NodeTable,
    pub splits: SplitSet,
}

impl DatasetBundle {
    pub fn new(name: impl Into<String>, graph: Graph, nodes: NodeTable, splits: SplitSet) -> Result<Self> {
        let b = Self {
            name: name.into(),
            graph,
            nodes,
            splits,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        self.graph.validate()?;
        self.nodes.validate()?;
        if self.nodes.features.rows() != self.graph.num_nodes() {
            return Err(Error::invalid(format!(
                "{} feature rows for {} nodes",
                self.nodes.features.rows(),
                self.graph.num_nodes()
            )));
        }
        for s in &self.splits.splits {
            s.validate(self.graph.num_nodes())?;
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn num_classes(&self) -> usize {
        self.nodes.num_classes
    }

    pub fn num_features(&self) -> usize {
        self.nodes.features.cols()
    }

    /// Same bundle with a different edge set.
    pub fn with_graph(&self, graph: Graph) -> Result<Self> {
        if graph.num_nodes() != self.num_nodes() {
            return Err(Error::invalid("replacement graph has a different node count"));
        }
        Ok(Self {
            name: self.name.clone(),
            graph,
            nodes: self.nodes.clone(),
            splits: self.splits.clone(),
        })
    }
}
