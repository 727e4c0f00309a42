use std::collections::HashSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Graph;
use crate::error::{Error, Result};

/// Adds `floor(ratio * |E|)` uniformly sampled undirected non-edges to `g`.
///
/// Sampling is without replacement over the complement of the edge set
/// (self-loops excluded), so the result is a strict superset of `g`.
pub fn add_random_edges(g: &Graph, ratio: f64, seed: u64) -> Result<Graph> {
    if !(0.0..=5.0).contains(&ratio) {
        return Err(Error::invalid(format!("noise ratio {ratio} outside [0, 5]")));
    }
    let n = g.num_nodes();
    let existing = g.undirected_edge_count();
    let requested = (ratio * existing as f64).floor() as usize;
    let available = (n * n.saturating_sub(1) / 2).saturating_sub(existing);
    if requested > available {
        return Err(Error::Saturated {
            requested,
            available,
        });
    }
    if requested == 0 {
        return Ok(g.clone());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let added: Vec<(usize, usize)> = if requested * 2 > available {
        // dense regime: enumerate the complement and sample indices
        let complement: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| ((u + 1)..n).map(move |v| (u, v)))
            .filter(|&(u, v)| !g.has_edge(u, v))
            .collect();
        sample(&mut rng, complement.len(), requested)
            .into_iter()
            .map(|i| complement[i])
            .collect()
    } else {
        let mut chosen = HashSet::with_capacity(requested);
        let mut out = Vec::with_capacity(requested);
        while out.len() < requested {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            if u == v || g.has_edge(u, v) {
                continue;
            }
            let key = (u.min(v), u.max(v));
            if chosen.insert(key) {
                out.push(key);
            }
        }
        out
    };

    let mut edges: Vec<(usize, usize)> = g.edges().collect();
    edges.extend(added);
    Graph::from_edges(n, &edges)
}
