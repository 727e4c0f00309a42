//! Rank correlation between per-dataset metric columns and an accuracy column.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use cagnn_core::metrics::kendall_tau;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// A CSV keyed by its `dataset` column; every other column must be numeric.
#[derive(Debug)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: BTreeMap<String, Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let bad = |msg: String| CliError::Validation(format!("{}: {msg}", path.display()));
        let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| bad(e.to_string()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let key = headers
            .iter()
            .position(|h| h == "dataset")
            .ok_or_else(|| bad("missing a dataset column".into()))?;
        let columns: Vec<String> = headers.iter().enumerate().filter(|(i, _)| *i != key).map(|(_, h)| h.clone()).collect();
        let mut rows = BTreeMap::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let mut values = Vec::with_capacity(columns.len());
            for (i, field) in rec.iter().enumerate() {
                if i == key {
                    continue;
                }
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| bad(format!("row {}: {field:?} is not a number", line + 2)))?;
                values.push(v);
            }
            let name = rec[key].trim().to_string();
            if rows.insert(name.clone(), values).is_some() {
                return Err(bad(format!("dataset {name:?} appears twice")));
            }
        }
        Ok(Self { columns, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub metric: String,
    /// The metric was multiplied by -1 before ranking.
    pub negated: bool,
    pub tau: f64,
    pub p_value: f64,
    pub exact: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KendallReport {
    pub accuracy_column: String,
    pub min_nodes: Option<usize>,
    pub datasets: Vec<String>,
    pub correlations: Vec<Correlation>,
}

pub struct Options<'a> {
    pub accuracy_column: &'a str,
    pub min_nodes: Option<usize>,
    pub negate: &'a [String],
}

pub fn report(results: &Table, metrics: &Table, opts: &Options<'_>) -> Result<KendallReport, CliError> {
    let invalid = |msg: String| CliError::Validation(msg);
    let acc = results
        .column(opts.accuracy_column)
        .ok_or_else(|| invalid(format!("results have no {:?} column", opts.accuracy_column)))?;
    let a: HashSet<&String> = results.rows.keys().collect();
    let b: HashSet<&String> = metrics.rows.keys().collect();
    if a != b {
        let mut only_results: Vec<_> = a.difference(&b).collect();
        let mut only_metrics: Vec<_> = b.difference(&a).collect();
        only_results.sort();
        only_metrics.sort();
        return Err(invalid(format!(
            "dataset keys differ: only in results {only_results:?}, only in metrics {only_metrics:?}"
        )));
    }

    let nodes = metrics.column("num_nodes");
    let datasets: Vec<String> = match opts.min_nodes {
        None => metrics.rows.keys().cloned().collect(),
        Some(min) => {
            let col = nodes.ok_or_else(|| invalid("--min-nodes needs a num_nodes column in the metrics file".into()))?;
            metrics
                .rows
                .iter()
                .filter(|(_, v)| v[col] > min as f64)
                .map(|(k, _)| k.clone())
                .collect()
        }
    };
    if datasets.len() < 2 {
        return Err(invalid(format!("need at least 2 datasets, got {}", datasets.len())));
    }

    let accuracy: Vec<f64> = datasets.iter().map(|d| results.rows[d][acc]).collect();
    let mut correlations = Vec::new();
    for (j, name) in metrics.columns.iter().enumerate() {
        if Some(j) == nodes {
            continue;
        }
        let negated = opts.negate.iter().any(|n| n == name);
        let sign = if negated { -1.0 } else { 1.0 };
        let xs: Vec<f64> = datasets.iter().map(|d| sign * metrics.rows[d][j]).collect();
        let r = kendall_tau(&xs, &accuracy).map_err(|e| invalid(format!("column {name:?}: {e}")))?;
        correlations.push(Correlation {
            metric: name.clone(),
            negated,
            tau: r.tau,
            p_value: r.p_value,
            exact: r.exact,
        });
    }
    Ok(KendallReport {
        accuracy_column: opts.accuracy_column.to_string(),
        min_nodes: opts.min_nodes,
        datasets,
        correlations,
    })
}
