//! On-disk dataset bundle: a directory holding `meta.json`, `edges.tsv`,
//! `features.csv`, `labels.txt` and `splits.json`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DatasetBundle, Graph, NodeTable, Split, SplitSet};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub name: String,
    pub num_nodes: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
}

const META: &str = "meta.json";
const EDGES: &str = "edges.tsv";
const FEATURES: &str = "features.csv";
const LABELS: &str = "labels.txt";
const SPLITS: &str = "splits.json";

fn require(dir: &Path, name: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(Error::MissingFile { path: p })
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<DatasetBundle> {
    let dir = dir.as_ref();
    let meta_path = require(dir, META)?;
    let edges_path = require(dir, EDGES)?;
    let features_path = require(dir, FEATURES)?;
    let labels_path = require(dir, LABELS)?;
    let splits_path = require(dir, SPLITS)?;

    let meta: BundleMeta = serde_json::from_str(&fs::read_to_string(&meta_path)?)
        .map_err(|e| parse_err(&meta_path, e.line(), e.to_string()))?;
    let n = meta.num_nodes;

    let labels = read_labels(&labels_path, n, meta.num_classes)?;
    let features = read_features(&features_path, n, meta.feature_dim)?;
    let edges = read_edges(&edges_path, n)?;
    let graph = Graph::from_edges(n, &edges)?;

    let splits: Vec<Split> = serde_json::from_str(&fs::read_to_string(&splits_path)?)
        .map_err(|e| parse_err(&splits_path, e.line(), e.to_string()))?;
    for (i, s) in splits.iter().enumerate() {
        s.validate(n)
            .map_err(|e| parse_err(&splits_path, 0, format!("split {i}: {e}")))?;
    }

    let nodes = NodeTable::new(features, labels, meta.num_classes)?;
    DatasetBundle::new(meta.name, graph, nodes, SplitSet { splits })
}

fn read_labels(path: &Path, n: usize, num_classes: usize) -> Result<Vec<usize>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut labels = Vec::with_capacity(n);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let label: usize = t
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("malformed class id {t:?}")))?;
        if label >= num_classes {
            return Err(Error::LabelOutOfRange {
                path: path.to_path_buf(),
                line: i + 1,
                label,
                num_classes,
            });
        }
        labels.push(label);
    }
    if labels.len() != n {
        return Err(parse_err(
            path,
            labels.len(),
            format!("expected {n} labels, found {}", labels.len()),
        ));
    }
    Ok(labels)
}

fn read_features(path: &Path, n: usize, dim: usize) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut data = Vec::with_capacity(n * dim);
    let mut rows = 0;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(rows + 1, |p| p.line() as usize);
        if record.len() != dim {
            return Err(parse_err(
                path,
                line,
                format!("expected {dim} columns, found {}", record.len()),
            ));
        }
        for field in record.iter() {
            let x: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(path, line, format!("malformed number {field:?}")))?;
            data.push(x);
        }
        rows += 1;
    }
    if rows != n {
        return Err(parse_err(path, rows, format!("expected {n} rows, found {rows}")));
    }
    Matrix::from_vec(n, dim, data)
}

fn read_edges(path: &Path, n: usize) -> Result<Vec<(usize, usize)>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut edges = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut parts = t.split_whitespace();
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(path, lineno, "expected `u<TAB>v`"));
        };
        let endpoint = |s: &str| -> Result<usize> {
            let v: usize = s
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("malformed node id {s:?}")))?;
            if v >= n {
                return Err(Error::DanglingEdge {
                    path: path.to_path_buf(),
                    line: lineno,
                    node: v,
                    num_nodes: n,
                });
            }
            Ok(v)
        };
        let u = endpoint(a)?;
        let v = endpoint(b)?;
        edges.push((u, v));
    }
    Ok(edges)
}

/// Writes `bundle` into `dir` (created if needed). Each undirected edge is
/// written once as `u<TAB>v` with `u < v`.
pub fn save_bundle(bundle: &DatasetBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let meta = BundleMeta {
        name: bundle.name.clone(),
        num_nodes: bundle.num_nodes(),
        num_classes: bundle.num_classes(),
        feature_dim: bundle.num_features(),
    };
    fs::write(dir.join(META), serde_json::to_string_pretty(&meta)?)?;

    let mut w = BufWriter::new(fs::File::create(dir.join(EDGES))?);
    for (u, v) in bundle.graph.edges() {
        writeln!(w, "{u}\t{v}")?;
    }
    w.flush()?;

    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(dir.join(FEATURES))?;
    let feats = &bundle.nodes.features;
    for i in 0..feats.rows() {
        w.write_record(feats.row(i).iter().map(|x| x.to_string()))?;
    }
    w.flush()?;

    let mut w = BufWriter::new(fs::File::create(dir.join(LABELS))?);
    for l in &bundle.nodes.labels {
        writeln!(w, "{l}")?;
    }
    w.flush()?;

    fs::write(dir.join(SPLITS), serde_json::to_string(&bundle.splits.splits)?)?;
    Ok(())
}
