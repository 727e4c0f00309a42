//! Kendall's tau-b with an exact permutation p-value for small samples.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Samples up to this size get an exact two-sided permutation p-value.
pub const EXACT_MAX_N: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KendallResult {
    pub tau: f64,
    pub p_value: f64,
    pub n: usize,
    /// Concordant minus discordant pairs.
    pub s: i64,
    pub exact: bool,
}

fn sign(x: f64) -> i64 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

fn score(xs: &[f64], ys: &[f64]) -> i64 {
    let n = xs.len();
    let mut s = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += sign(xs[i] - xs[j]) * sign(ys[i] - ys[j]);
        }
    }
    s
}

/// Sizes of groups of equal values.
fn tie_groups(v: &[f64]) -> Vec<u64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut groups = Vec::new();
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            if run > 1 {
                groups.push(run);
            }
            run = 1;
        }
    }
    if run > 1 {
        groups.push(run);
    }
    groups
}

pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> Result<KendallResult> {
    if xs.len() != ys.len() {
        return Err(Error::invalid(format!(
            "kendall_tau length mismatch: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::invalid("kendall_tau needs at least 2 observations"));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::invalid("kendall_tau inputs must be finite"));
    }

    let n0 = (n * (n - 1) / 2) as f64;
    let tx = tie_groups(xs);
    let ty = tie_groups(ys);
    let n1: f64 = tx.iter().map(|&t| (t * (t - 1) / 2) as f64).sum();
    let n2: f64 = ty.iter().map(|&t| (t * (t - 1) / 2) as f64).sum();
    let denom = ((n0 - n1) * (n0 - n2)).sqrt();
    if denom == 0.0 {
        return Err(Error::invalid("kendall_tau undefined for a constant input"));
    }
    let s = score(xs, ys);
    let tau = (s as f64 / denom).clamp(-1.0, 1.0);

    let (p_value, exact) = if n <= EXACT_MAX_N {
        let p = if tx.is_empty() && ty.is_empty() {
            exact_p_no_ties(n, s)
        } else {
            permutation_p(xs, ys, s)
        };
        (p, true)
    } else {
        (normal_p(n, s, &tx, &ty), false)
    };

    Ok(KendallResult {
        tau,
        p_value: p_value.min(1.0),
        n,
        s,
        exact,
    })
}

/// Exact two-sided p-value without ties: the permutation distribution of
/// `S = n(n-1)/2 - 2 * inversions` follows the Mahonian numbers.
fn exact_p_no_ties(n: usize, s: i64) -> f64 {
    let max_inv = n * (n - 1) / 2;
    let mut counts = vec![0f64; max_inv + 1];
    counts[0] = 1.0;
    for m in 2..=n {
        // insert element m: adds 0..m-1 inversions
        let mut next = vec![0f64; max_inv + 1];
        for (k, &c) in counts.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for add in 0..m {
                if k + add <= max_inv {
                    next[k + add] += c;
                }
            }
        }
        counts = next;
    }
    let total: f64 = counts.iter().sum();
    let target = s.abs();
    let extreme: f64 = counts
        .iter()
        .enumerate()
        .filter(|(k, _)| (max_inv as i64 - 2 * *k as i64).abs() >= target)
        .map(|(_, &c)| c)
        .sum();
    extreme / total
}

/// Exact two-sided p-value by enumerating every permutation of `ys`
/// (Heap's algorithm). The tau-b denominator is permutation invariant, so
/// comparing `|S|` suffices.
fn permutation_p(xs: &[f64], ys: &[f64], s_obs: i64) -> f64 {
    let n = ys.len();
    let target = s_obs.abs();
    let mut perm = ys.to_vec();
    let mut c = vec![0usize; n];
    let mut extreme = u64::from(score(xs, &perm).abs() >= target);
    let mut total = 1u64;
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            total += 1;
            if score(xs, &perm).abs() >= target {
                extreme += 1;
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    extreme as f64 / total as f64
}

/// Normal approximation with the tie-corrected variance of `S`.
fn normal_p(n: usize, s: i64, tx: &[u64], ty: &[u64]) -> f64 {
    let nf = n as f64;
    let v = |t: &[u64], f: fn(f64) -> f64| t.iter().map(|&t| f(t as f64)).sum::<f64>();
    let v0 = nf * (nf - 1.0) * (2.0 * nf + 5.0);
    let vt = v(tx, |t| t * (t - 1.0) * (2.0 * t + 5.0));
    let vu = v(ty, |t| t * (t - 1.0) * (2.0 * t + 5.0));
    let v1 = v(tx, |t| t * (t - 1.0)) * v(ty, |t| t * (t - 1.0)) / (2.0 * nf * (nf - 1.0));
    let v2 = v(tx, |t| t * (t - 1.0) * (t - 2.0)) * v(ty, |t| t * (t - 1.0) * (t - 2.0))
        / (9.0 * nf * (nf - 1.0) * (nf - 2.0));
    let var = (v0 - vt - vu) / 18.0 + v1 + v2;
    if var <= 0.0 {
        return 1.0;
    }
    let z = s as f64 / var.sqrt();
    erfc(z.abs() / std::f64::consts::SQRT_2)
}
