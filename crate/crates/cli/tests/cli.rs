//! End-to-end runs of the `cagnn` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cagnn_core::metrics::kendall_tau;
use cagnn_core::trainer::read_sweep_csv;
use cagnn_core::TrainReport;
use serde_json::Value;
use tempfile::TempDir;

fn cagnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cagnn")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = cagnn(args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, name: &str, kind: &str, n_per_class: usize, classes: usize, seed: u64) -> PathBuf {
    let path = dir.join(name);
    ok(&[
        "synth",
        "--kind",
        kind,
        "--n-per-class",
        &n_per_class.to_string(),
        "--classes",
        &classes.to_string(),
        "--degree",
        "10",
        "--seed",
        &seed.to_string(),
        "--out",
        s(&path),
    ]);
    path
}

const QUICK: [&str; 8] = ["--hidden", "16", "--epochs", "150", "--patience", "50", "--max-splits", "1"];

fn train(bundle: &Path, seed: u64, extra: &[&str]) -> Output {
    let seed = seed.to_string();
    let mut args = vec!["train", "--bundle", s(bundle), "--seed", &seed];
    args.extend_from_slice(&QUICK);
    args.extend_from_slice(extra);
    ok(&args)
}

#[test]
fn bipartite_bundle_has_zero_neighbor_entropy() {
    let dir = TempDir::new().unwrap();
    let b = synth(dir.path(), "bip", "bipartite", 50, 2, 3);
    let m = json(&ok(&["metrics", "--bundle", s(&b)]));
    assert!(m["h_neighbor"].as_f64().unwrap().abs() <= 1e-9, "{m}");
    assert_eq!(m["h_edge"].as_f64().unwrap(), 0.0);
    assert_eq!(m["num_nodes"].as_u64().unwrap(), 100);
}

#[test]
fn metrics_accepts_several_bundles() {
    let dir = TempDir::new().unwrap();
    let a = synth(dir.path(), "a", "pure-homophily", 30, 3, 1);
    let b = synth(dir.path(), "b", "random-neighbor", 30, 3, 1);
    let m = json(&ok(&["metrics", "--bundle", s(&a), "--bundle", s(&b)]));
    let rows = m.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0]["h_neighbor"].as_f64().unwrap().abs() <= 1e-9);
    assert!(rows[1]["h_neighbor"].as_f64().unwrap() > 0.5);
}

#[test]
fn spectral_check_passes() {
    let out = ok(&["spectral-check", "--nodes", "8", "--order", "4", "--seed", "7", "--instances", "3"]);
    let v = json(&out);
    assert_eq!(v["pass"], Value::Bool(true));
    assert!(v["max_deviation"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(cagnn(&["--help"]).status.code(), Some(0));
    assert_eq!(cagnn(&["train", "--help"]).status.code(), Some(0));
    assert_eq!(cagnn(&["--version"]).status.code(), Some(0));
}

#[test]
fn validation_errors_exit_one_with_usage() {
    let dir = TempDir::new().unwrap();
    let b = synth(dir.path(), "b", "bipartite", 20, 2, 1);

    let unknown = cagnn(&["metrics", "--bundle", s(&b), "--no-such-flag"]);
    assert_eq!(unknown.status.code(), Some(1));

    let missing = cagnn(&["metrics", "--bundle", s(&dir.path().join("absent"))]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("Usage"));

    let bad_model = cagnn(&["train", "--bundle", s(&b), "--kernel", "mlp", "--mode", "cagnn"]);
    assert_eq!(bad_model.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad_model.stderr).contains("Usage"));

    let existing = cagnn(&["synth", "--kind", "bipartite", "--out", s(&b)]);
    assert_eq!(existing.status.code(), Some(1));
}

#[test]
fn unwritable_output_exits_two_and_leaves_nothing() {
    let dir = TempDir::new().unwrap();
    let b = synth(dir.path(), "b", "bipartite", 20, 2, 1);
    let target = dir.path().join("no_dir").join("m.json");
    let out = cagnn(&["metrics", "--bundle", s(&b), "--out", s(&target)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!target.exists());
}

#[test]
fn synth_writes_a_complete_bundle() {
    let dir = TempDir::new().unwrap();
    let b = synth(dir.path(), "b", "patterned", 20, 3, 1);
    for f in ["meta.json", "edges.tsv", "features.csv", "labels.txt", "splits.json"] {
        assert!(b.join(f).is_file(), "{f} missing");
    }
    let leftovers: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .filter(|n| n != "b")
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn training_is_deterministic_and_round_trips() {
    let dir = TempDir::new().unwrap();
    let b = synth(dir.path(), "b", "patterned", 40, 3, 2);
    let r1 = dir.path().join("r1.json");
    let r2 = dir.path().join("r2.json");
    train(&b, 5, &["--out", s(&r1)]);
    train(&b, 5, &["--out", s(&r2)]);
    let a: TrainReport = serde_json::from_slice(&fs::read(&r1).unwrap()).unwrap();
    let c: TrainReport = serde_json::from_slice(&fs::read(&r2).unwrap()).unwrap();
    assert_eq!(a.per_split_test, c.per_split_test);
    assert_eq!(a.epochs_run, c.epochs_run);
    assert_eq!(a.alpha_means, c.alpha_means);
    assert_eq!(a.per_split_test.len(), 1);
}

#[test]
fn sweep_csv_reads_back() {
    let dir = TempDir::new().unwrap();
    let b = synth(dir.path(), "b", "patterned", 20, 2, 4);
    let out = dir.path().join("sweep.csv");
    let mut args = vec!["sweep-layers", "--bundle", s(&b), "--depths", "1,3", "--out", s(&out)];
    args.extend_from_slice(&QUICK);
    ok(&args);
    let rows = read_sweep_csv(fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(rows.iter().map(|r| r.x).collect::<Vec<_>>(), vec![1.0, 3.0]);

    let out = dir.path().join("noise.csv");
    let mut args = vec!["noisy-edges", "--bundle", s(&b), "--ratios", "0,0.5", "--out", s(&out)];
    args.extend_from_slice(&QUICK);
    ok(&args);
    let rows = read_sweep_csv(fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(rows.iter().map(|r| r.x).collect::<Vec<_>>(), vec![0.0, 0.5]);
}

fn alpha_mean(bundle: &Path, checkpoint: &Path, csv: &Path) -> Value {
    json(&ok(&["alpha-hist", "--bundle", s(bundle), "--checkpoint", s(checkpoint), "--out", s(csv)]))
}

#[test]
fn alpha_csv_has_one_row_per_node_and_layer() {
    let dir = TempDir::new().unwrap();
    let b = synth(dir.path(), "b", "patterned", 30, 3, 1);
    let ck = dir.path().join("ck.json");
    let csv = dir.path().join("alpha.csv");
    train(&b, 1, &["--layers", "3", "--checkpoint", s(&ck), "--out", s(&dir.path().join("r.json"))]);
    let v = alpha_mean(&b, &ck, &csv);
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("node_id,layer,alpha"));
    assert_eq!(lines.count(), 90 * 3);
    let total: u64 = v["counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum();
    assert_eq!(total, 270);
    assert_eq!(v["layers"].as_array().unwrap().len(), 3);
}

#[test]
fn zeroed_gate_puts_every_alpha_at_one_half() {
    let dir = TempDir::new().unwrap();
    let b = synth(dir.path(), "b", "patterned", 30, 3, 1);
    let ck = dir.path().join("ck.json");
    train(&b, 1, &["--checkpoint", s(&ck), "--out", s(&dir.path().join("r.json"))]);

    let mut v: Value = serde_json::from_slice(&fs::read(&ck).unwrap()).unwrap();
    let names: Vec<String> = v["params"]["names"]
        .as_array()
        .unwrap()
        .iter()
        .map(|n| n.as_str().unwrap().to_string())
        .collect();
    let mut zeroed = 0;
    for (i, name) in names.iter().enumerate() {
        if name.starts_with("mixer.") {
            for x in v["params"]["values"][i]["data"].as_array_mut().unwrap() {
                *x = Value::from(0.0);
            }
            zeroed += 1;
        }
    }
    assert!(zeroed > 0);
    fs::write(&ck, serde_json::to_vec(&v).unwrap()).unwrap();

    let csv = dir.path().join("alpha.csv");
    let h = alpha_mean(&b, &ck, &csv);
    let text = fs::read_to_string(&csv).unwrap();
    for line in text.lines().skip(1) {
        assert_eq!(line.rsplit(',').next(), Some("0.5"), "{line}");
    }
    let counts: Vec<u64> = h["counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).collect();
    assert_eq!(counts.iter().filter(|&&c| c > 0).count(), 1);
    assert_eq!(counts[10], 180);
}

#[test]
fn gates_open_less_on_random_neighbors() {
    let dir = TempDir::new().unwrap();
    let mut means = Vec::new();
    for kind in ["random-neighbor", "patterned"] {
        let b = synth(dir.path(), kind, kind, 60, 3, 1);
        let ck = dir.path().join(format!("{kind}.json"));
        train(&b, 1, &["--checkpoint", s(&ck), "--out", s(&dir.path().join("r.json"))]);
        means.push(alpha_mean(&b, &ck, &dir.path().join("a.csv"))["mean"].as_f64().unwrap());
    }
    assert!(means[0] < means[1], "random-neighbor {} vs patterned {}", means[0], means[1]);
}

#[test]
fn alpha_hist_rejects_ungated_checkpoints() {
    let dir = TempDir::new().unwrap();
    let b = synth(dir.path(), "b", "patterned", 20, 2, 1);
    let ck = dir.path().join("ck.json");
    train(&b, 1, &["--mode", "vanilla", "--checkpoint", s(&ck), "--out", s(&dir.path().join("r.json"))]);
    let out = cagnn(&["alpha-hist", "--bundle", s(&b), "--checkpoint", s(&ck), "--out", s(&dir.path().join("a.csv"))]);
    assert_eq!(out.status.code(), Some(1));
}

// Published per-dataset values: name, nodes, h_node, h_edge, h_neighbor, accuracy.
const TABLE: [(&str, usize, f64, f64, f64, f64); 9] = [
    ("texas", 183, 0.06, 0.11, 0.45, 85.13),
    ("wisconsin", 251, 0.16, 0.21, 0.72, 82.55),
    ("actor", 7600, 0.24, 0.22, 0.98, 35.83),
    ("squirrel", 5201, 0.22, 0.22, 0.92, 61.82),
    ("chameleon", 2277, 0.25, 0.23, 0.91, 69.16),
    ("cornell", 183, 0.11, 0.30, 0.55, 81.35),
    ("citeseer", 3327, 0.71, 0.74, 0.87, 76.03),
    ("pubmed", 19717, 0.79, 0.80, 0.85, 89.74),
    ("cora", 2708, 0.83, 0.81, 0.72, 87.28),
];

fn write_tables(dir: &Path) -> (PathBuf, PathBuf) {
    let results = dir.join("results.csv");
    let metrics = dir.join("metrics.csv");
    let mut r = String::from("dataset,accuracy\n");
    let mut m = String::from("dataset,num_nodes,h_node,h_edge,h_neighbor\n");
    for (name, n, hn, he, hb, acc) in TABLE {
        r += &format!("{name},{acc}\n");
        m += &format!("{name},{n},{hn},{he},{hb}\n");
    }
    fs::write(&results, r).unwrap();
    fs::write(&metrics, m).unwrap();
    (results, metrics)
}

fn correlation<'a>(report: &'a Value, metric: &str) -> &'a Value {
    report["correlations"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["metric"] == metric)
        .unwrap()
}

#[test]
fn kendall_matches_the_library_on_the_published_table() {
    let dir = TempDir::new().unwrap();
    let (results, metrics) = write_tables(dir.path());
    let v = json(&ok(&["kendall", "--results", s(&results), "--metrics", s(&metrics)]));
    let acc: Vec<f64> = TABLE.iter().map(|t| t.5).collect();
    let columns: [(&str, fn(&(&str, usize, f64, f64, f64, f64)) -> f64); 3] =
        [("h_node", |t| t.2), ("h_edge", |t| t.3), ("h_neighbor", |t| -t.4)];
    for (name, f) in columns {
        let xs: Vec<f64> = TABLE.iter().map(f).collect();
        let expect = kendall_tau(&xs, &acc).unwrap();
        let c = correlation(&v, name);
        assert_eq!(c["tau"].as_f64().unwrap(), expect.tau, "{name}");
        assert_eq!(c["p_value"].as_f64().unwrap(), expect.p_value, "{name}");
        assert_eq!(c["negated"], Value::Bool(name == "h_neighbor"));
    }
    assert!((correlation(&v, "h_neighbor")["tau"].as_f64().unwrap() - 0.59).abs() <= 0.05);

    let big = json(&ok(&[
        "kendall",
        "--results",
        s(&results),
        "--metrics",
        s(&metrics),
        "--min-nodes",
        "500",
    ]));
    assert_eq!(big["datasets"].as_array().unwrap().len(), 6);
    let kept: Vec<_> = TABLE.iter().filter(|t| t.1 > 500).collect();
    let xs: Vec<f64> = kept.iter().map(|t| -t.4).collect();
    let ys: Vec<f64> = kept.iter().map(|t| t.5).collect();
    assert_eq!(
        correlation(&big, "h_neighbor")["tau"].as_f64().unwrap(),
        kendall_tau(&xs, &ys).unwrap().tau
    );
}

#[test]
fn kendall_of_identical_columns_is_one() {
    let dir = TempDir::new().unwrap();
    let results = dir.path().join("r.csv");
    let metrics = dir.path().join("m.csv");
    fs::write(&results, "dataset,accuracy\na,1\nb,2\nc,3\nd,4\n").unwrap();
    fs::write(&metrics, "dataset,score\na,1\nb,2\nc,3\nd,4\n").unwrap();
    let v = json(&ok(&["kendall", "--results", s(&results), "--metrics", s(&metrics)]));
    assert_eq!(correlation(&v, "score")["tau"].as_f64().unwrap(), 1.0);
}

#[test]
fn kendall_rejects_bad_inputs() {
    let dir = TempDir::new().unwrap();
    let results = dir.path().join("r.csv");
    let one = dir.path().join("one.csv");
    let other = dir.path().join("other.csv");
    fs::write(&results, "dataset,accuracy\na,1\n").unwrap();
    fs::write(&one, "dataset,score\na,1\n").unwrap();
    fs::write(&other, "dataset,score\nb,1\n").unwrap();
    let run = |m: &Path| cagnn(&["kendall", "--results", s(&results), "--metrics", s(m)]).status.code();
    assert_eq!(run(&one), Some(1));
    assert_eq!(run(&other), Some(1));
}

#[test]
fn metrics_csv_feeds_kendall() {
    let dir = TempDir::new().unwrap();
    let mut args = vec!["metrics".to_string(), "--format".into(), "csv".into()];
    let mut results = String::from("dataset,accuracy\n");
    for (i, kind) in ["pure-homophily", "patterned", "random-neighbor"].iter().enumerate() {
        let b = synth(dir.path(), kind, kind, 30, 3, 1);
        args.push("--bundle".into());
        args.push(s(&b).into());
        results += &format!("{},{}\n", kind_name(&b), 90 - 20 * i);
    }
    let metrics = dir.path().join("metrics.csv");
    args.push("--out".into());
    args.push(s(&metrics).into());
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let results_path = dir.path().join("results.csv");
    fs::write(&results_path, results).unwrap();
    let v = json(&ok(&["kendall", "--results", s(&results_path), "--metrics", s(&metrics)]));
    assert_eq!(v["datasets"].as_array().unwrap().len(), 3);
    // entropy rises from homophilous to random neighbors while accuracy falls
    assert_eq!(correlation(&v, "h_neighbor")["tau"].as_f64().unwrap(), 1.0);
}

fn kind_name(bundle: &Path) -> String {
    let meta: Value = serde_json::from_slice(&fs::read(bundle.join("meta.json")).unwrap()).unwrap();
    meta["name"].as_str().unwrap().to_string()
}
