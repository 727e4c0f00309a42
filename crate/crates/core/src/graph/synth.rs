//! Synthetic graphs with controlled neighbor-label distributions.
//!
//! Every generator draws edges through a symmetric class-pair matrix `P`:
//! each node of class `k` makes `ceil(degree / 2)` picks, choosing a target
//! class from row `P[k]` and then a uniform node of that class. Because `P`
//! is symmetric and classes are equally sized, the expected neighbor-label
//! distribution of a class-`k` node is exactly `P[k]`.

use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{stratified_split, DatasetBundle, Graph, NodeTable, SplitSet};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    PureHomophily,
    Bipartite,
    RandomNeighbor,
    Patterned,
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pure-homophily" => Ok(Self::PureHomophily),
            "bipartite" => Ok(Self::Bipartite),
            "random-neighbor" => Ok(Self::RandomNeighbor),
            "patterned" => Ok(Self::Patterned),
            other => Err(Error::invalid(format!("unknown synthetic kind {other:?}"))),
        }
    }
}

impl SyntheticKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::PureHomophily => "pure-homophily",
            Self::Bipartite => "bipartite",
            Self::RandomNeighbor => "random-neighbor",
            Self::Patterned => "patterned",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub kind: SyntheticKind,
    pub n_per_class: usize,
    pub num_classes: usize,
    pub degree: usize,
    pub seed: u64,
    /// Standard deviation of the Gaussian noise added to one-hot features.
    pub feature_noise: f64,
    /// Base distribution `w` for the patterned kind; row `k` of `P` is `w`
    /// cyclically shifted by `k`. Defaults to `0.7` on the first entry with
    /// the remaining `0.3` halving across the rest.
    pub pattern: Option<Vec<f64>>,
}

impl SyntheticParams {
    pub fn new(kind: SyntheticKind, n_per_class: usize, num_classes: usize, degree: usize, seed: u64) -> Self {
        Self {
            kind,
            n_per_class,
            num_classes,
            degree,
            seed,
            feature_noise: 0.1,
            pattern: None,
        }
    }
}

fn default_pattern(c: usize) -> Vec<f64> {
    let mut w = vec![0.7];
    let tail: Vec<f64> = (0..c - 1).map(|i| 0.5f64.powi(i as i32)).collect();
    let z: f64 = tail.iter().sum();
    w.extend(tail.iter().map(|t| 0.3 * t / z));
    w
}

/// The symmetric class-pair matrix used by `make_synthetic`.
pub fn pattern_matrix(params: &SyntheticParams) -> Result<Matrix> {
    let c = params.num_classes;
    if c < 2 {
        return Err(Error::invalid("synthetic graphs need at least 2 classes"));
    }
    Ok(match params.kind {
        SyntheticKind::PureHomophily => Matrix::identity(c),
        SyntheticKind::Bipartite => {
            if c != 2 {
                return Err(Error::invalid("bipartite generator requires exactly 2 classes"));
            }
            Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]])?
        }
        SyntheticKind::RandomNeighbor => Matrix::filled(c, c, 1.0 / c as f64),
        SyntheticKind::Patterned => {
            let w = params.pattern.clone().unwrap_or_else(|| default_pattern(c));
            if w.len() != c || w.iter().any(|&x| !(x >= 0.0)) {
                return Err(Error::invalid(format!(
                    "pattern must have {c} non-negative entries"
                )));
            }
            let z: f64 = w.iter().sum();
            if (z - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("pattern sums to {z}, expected 1")));
            }
            let p = Matrix::from_fn(c, c, |k, j| w[(k + j) % c]);
            for a in 0..c {
                for b in (a + 1)..c {
                    if p.row(a) == p.row(b) {
                        return Err(Error::invalid("pattern rows must be distinct across classes"));
                    }
                }
            }
            p
        }
    })
}

pub fn make_synthetic(params: &SyntheticParams) -> Result<DatasetBundle> {
    let c = params.num_classes;
    let per = params.n_per_class;
    let n = per * c;
    let p = pattern_matrix(params)?;
    if per == 0 || params.degree == 0 || params.degree >= n {
        return Err(Error::invalid(format!(
            "inadmissible synthetic parameters: n_per_class={per}, degree={} (total nodes {n})",
            params.degree
        )));
    }
    if params.kind == SyntheticKind::PureHomophily && per < 2 {
        return Err(Error::invalid("pure-homophily needs at least 2 nodes per class"));
    }
    if !(params.feature_noise >= 0.0) {
        return Err(Error::invalid("feature noise must be non-negative"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    // class k occupies node ids [k * per, (k + 1) * per)
    let labels: Vec<usize> = (0..n).map(|i| i / per).collect();
    let rows: Vec<WeightedIndex<f64>> = (0..c)
        .map(|k| WeightedIndex::new(p.row(k).to_vec()))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::invalid(format!("bad pattern row: {e}")))?;

    let picks = params.degree.div_ceil(2);
    let mut edges = Vec::with_capacity(n * picks);
    for u in 0..n {
        let k = labels[u];
        for _ in 0..picks {
            let j = rows[k].sample(&mut rng);
            if j == k && per < 2 {
                continue;
            }
            let v = loop {
                let v = j * per + rng.random_range(0..per);
                if v != u {
                    break v;
                }
            };
            edges.push((u, v));
        }
    }
    let graph = Graph::from_edges(n, &edges)?;

    let noise = Normal::new(0.0, params.feature_noise.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::invalid(e.to_string()))?;
    let features = Matrix::from_fn(n, c, |i, j| {
        let onehot = if labels[i] == j { 1.0 } else { 0.0 };
        if params.feature_noise > 0.0 {
            onehot + noise.sample(&mut rng)
        } else {
            onehot
        }
    });
    let split = stratified_split(&labels, c, 0.48, 0.32, &mut rng);
    let nodes = NodeTable::new(features, labels, c)?;
    DatasetBundle::new(
        format!("synthetic-{}", params.kind.name()),
        graph,
        nodes,
        SplitSet {
            splits: vec![split],
        },
    )
}
