//! Full-batch training with early stopping, per-split grid search, and the
//! depth and edge-noise sweeps.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, AdamConfig, Tape};
use crate::error::{Error, Result};
use crate::graph::{add_random_edges, DatasetBundle, Split};
use crate::models::{accuracy, ForwardOptions, GraphContext, Model, ModelConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            weight_decay: 5e-4,
            dropout: 0.5,
            max_epochs: 500,
            patience: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Invalid("learning rate and weight decay must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.max_epochs == 0 || self.max_epochs < self.patience {
            return Err(Error::Invalid(format!(
                "need max_epochs >= patience and max_epochs > 0 (got {} and {})",
                self.max_epochs, self.patience
            )));
        }
        Ok(())
    }
}

/// Hyper-parameter grid; defaults to lr {0.001, 0.01, 0.05}, weight decay
/// {5e-5, 5e-4}, dropout {0, 0.5}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lr: Vec<f64>,
    pub weight_decay: Vec<f64>,
    pub dropout: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            lr: vec![0.001, 0.01, 0.05],
            weight_decay: vec![5e-5, 5e-4],
            dropout: vec![0.0, 0.5],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
}

impl Grid {
    pub fn single(lr: f64, weight_decay: f64, dropout: f64) -> Self {
        Self {
            lr: vec![lr],
            weight_decay: vec![weight_decay],
            dropout: vec![dropout],
        }
    }

    /// Cartesian product in lr-major order.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &lr in &self.lr {
            for &weight_decay in &self.weight_decay {
                for &dropout in &self.dropout {
                    out.push(GridPoint { lr, weight_decay, dropout });
                }
            }
        }
        out
    }

    /// Parses `lr=0.01,0.05;wd=5e-4;dropout=0,0.5`. Omitted keys keep
    /// their defaults.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut grid = Grid::default();
        for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, values) = part
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("grid entry {part:?} is not key=values")))?;
            let values: Vec<f64> = values
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Invalid(format!("grid value {v:?} is not a number")))
                })
                .collect::<Result<_>>()?;
            if values.is_empty() {
                return Err(Error::Invalid(format!("grid key {key:?} has no values")));
            }
            match key.trim() {
                "lr" => grid.lr = values,
                "wd" | "weight_decay" => grid.weight_decay = values,
                "dropout" => grid.dropout = values,
                other => return Err(Error::Invalid(format!("unknown grid key {other:?} (expected lr, wd, dropout)"))),
            }
        }
        Ok(grid)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub model: Model,
    /// Validation accuracy after every epoch, in percent.
    pub val_curve: Vec<f64>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    /// Mean wall-clock time of forward, backward and optimizer step.
    pub ms_per_epoch: f64,
}

/// Per-run seed for `split_index`.
pub fn run_seed(seed: u64, split_index: usize) -> u64 {
    seed ^ split_index as u64
}

/// Labels with every test entry replaced by a sentinel; training and model
/// selection only ever see this copy.
fn selection_labels(labels: &[usize], split: &Split) -> Vec<usize> {
    let mut out = labels.to_vec();
    for &i in &split.test {
        out[i] = usize::MAX;
    }
    out
}

/// Trains one model on one split. `ctx` must match the model kernel and the
/// bundle graph.
pub fn train_one(
    bundle: &DatasetBundle,
    ctx: &GraphContext,
    split: &Split,
    model_config: &ModelConfig,
    train: &TrainConfig,
) -> Result<TrainOutcome> {
    train.validate()?;
    split.validate(bundle.num_nodes())?;
    if split.train.is_empty() || split.val.is_empty() {
        return Err(Error::Invalid("train and validation sets must be non-empty".into()));
    }
    let config = ModelConfig {
        dropout: train.dropout,
        ..model_config.clone()
    };
    let mut model = Model::new(config, bundle.num_features(), bundle.num_classes(), train.seed)?;
    let labels = selection_labels(&bundle.nodes.labels, split);

    let mut adam = Adam::new(
        AdamConfig {
            lr: train.lr,
            weight_decay: train.weight_decay,
            ..AdamConfig::default()
        },
        &model.params.values,
    );
    let mut best = (f64::NEG_INFINITY, f64::INFINITY);
    let mut best_params = model.params.values.clone();
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut val_curve = Vec::new();
    let mut step_ms = 0.0;

    for epoch in 0..train.max_epochs {
        let start = Instant::now();
        let grads = {
            let tape = Tape::new();
            let opts = ForwardOptions::train(train.seed.wrapping_add((epoch as u64 + 1) << 20));
            let (fwd, vars) = model.forward(&tape, ctx, opts)?;
            let loss = fwd.logits.masked_cross_entropy(&labels, &split.train)?;
            let value = loss.value()[(0, 0)];
            if !value.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    config: format!("{} lr={:?} wd={:?} dropout={:?}", model.config.label(), train.lr, train.weight_decay, train.dropout),
                });
            }
            let mut g = tape.backward(loss);
            vars.iter().map(|v| g.take(*v)).collect::<Vec<_>>()
        };
        adam.step(&mut model.params.values, &grads);
        step_ms += start.elapsed().as_secs_f64() * 1e3;

        let (val_acc, val_loss) = evaluate(&model, ctx, &labels, &split.val)?;
        val_curve.push(val_acc);
        if val_acc > best.0 || (val_acc == best.0 && val_loss < best.1) {
            best = (val_acc, val_loss);
            best_params.clone_from(&model.params.values);
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= train.patience {
                break;
            }
        }
    }

    model.params.values = best_params;
    let epochs_run = val_curve.len();
    let logits = model.predict(ctx)?;
    let test_accuracy = accuracy(&logits, &bundle.nodes.labels, &split.test);
    Ok(TrainOutcome {
        model,
        val_curve,
        best_epoch,
        epochs_run,
        val_accuracy: best.0,
        test_accuracy,
        ms_per_epoch: step_ms / epochs_run as f64,
    })
}

fn evaluate(model: &Model, ctx: &GraphContext, labels: &[usize], idx: &[usize]) -> Result<(f64, f64)> {
    let logits = model.predict(ctx)?;
    let acc = accuracy(&logits, labels, idx);
    let loss = -idx.iter().map(|&i| logits[(i, labels[i])]).sum::<f64>() / idx.len() as f64;
    Ok((acc, loss))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub dataset: String,
    pub model: String,
    pub model_config: ModelConfig,
    /// Test accuracy (percent) of the selected grid point on each split.
    pub per_split_test: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of `per_split_test`.
    pub std: f64,
    pub best_params: Vec<GridPoint>,
    pub epochs_run: Vec<usize>,
    pub ms_per_epoch: f64,
    /// Mean gate per layer for each split's selected model.
    pub alpha_means: Vec<Vec<f64>>,
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Clone, Debug)]
pub struct GridOutcome {
    pub report: TrainReport,
    /// The selected model for each split.
    pub models: Vec<Model>,
}

#[derive(Clone, Debug)]
pub struct GridOptions {
    pub grid: Grid,
    /// `lr`, `weight_decay` and `dropout` are taken from the grid.
    pub train: TrainConfig,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
    /// Use only the first `max_splits` splits when set.
    pub max_splits: Option<usize>,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            grid: Grid::default(),
            train: TrainConfig::default(),
            jobs: 0,
            max_splits: None,
        }
    }
}

/// Picks the grid point with the best validation accuracy separately for
/// each split and aggregates the corresponding test accuracies.
pub fn grid_search(bundle: &DatasetBundle, model_config: &ModelConfig, opts: &GridOptions) -> Result<GridOutcome> {
    model_config.validate()?;
    let points = opts.grid.points();
    if points.is_empty() {
        return Err(Error::Invalid("hyper-parameter grid is empty".into()));
    }
    let n_splits = opts.max_splits.map_or(bundle.splits.len(), |m| m.min(bundle.splits.len()));
    if n_splits == 0 {
        return Err(Error::Invalid(format!("bundle {} has no splits", bundle.name)));
    }
    let ctx = GraphContext::new(&bundle.graph, &bundle.nodes.features, model_config.kernel)?;
    let runs: Vec<(usize, usize)> = (0..n_splits)
        .flat_map(|s| (0..points.len()).map(move |p| (s, p)))
        .collect();
    let run = |&(s, p): &(usize, usize)| -> Result<TrainOutcome> {
        let gp = points[p];
        let train = TrainConfig {
            lr: gp.lr,
            weight_decay: gp.weight_decay,
            dropout: gp.dropout,
            seed: run_seed(opts.train.seed, s),
            ..opts.train.clone()
        };
        train_one(bundle, &ctx, &bundle.splits.splits[s], model_config, &train)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::Invalid(format!("worker pool: {e}")))?;
    let outcomes: Vec<TrainOutcome> = pool.install(|| runs.par_iter().map(run).collect::<Result<_>>())?;

    let mut per_split_test = Vec::with_capacity(n_splits);
    let mut best_params = Vec::with_capacity(n_splits);
    let mut epochs_run = Vec::with_capacity(n_splits);
    let mut alpha_means = Vec::with_capacity(n_splits);
    let mut models = Vec::with_capacity(n_splits);
    let mut timing = Vec::with_capacity(outcomes.len());
    let mut outcomes = outcomes.into_iter();
    for _ in 0..n_splits {
        let mut chosen: Option<(usize, TrainOutcome)> = None;
        for p in 0..points.len() {
            let o = outcomes.next().expect("one outcome per run");
            timing.push(o.ms_per_epoch);
            if chosen.as_ref().is_none_or(|(_, c)| o.val_accuracy > c.val_accuracy) {
                chosen = Some((p, o));
            }
        }
        let (p, o) = chosen.expect("grid is non-empty");
        per_split_test.push(o.test_accuracy);
        best_params.push(points[p]);
        epochs_run.push(o.epochs_run);
        let trace = o.model.trace(&ctx, None)?;
        alpha_means.push(trace.alphas.iter().map(|a| a.iter().sum::<f64>() / a.len() as f64).collect());
        models.push(o.model);
    }
    let (mean, std) = mean_std(&per_split_test);
    Ok(GridOutcome {
        report: TrainReport {
            dataset: bundle.name.clone(),
            model: model_config.label(),
            model_config: model_config.clone(),
            per_split_test,
            mean,
            std,
            best_params,
            epochs_run,
            ms_per_epoch: timing.iter().sum::<f64>() / timing.len() as f64,
            alpha_means,
        },
        models,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub x: f64,
    pub model: String,
    pub mean: f64,
    pub std: f64,
}

/// Accuracy versus depth.
pub fn sweep_layers(bundle: &DatasetBundle, model_config: &ModelConfig, depths: &[usize], opts: &GridOptions) -> Result<Vec<SweepRow>> {
    depths
        .iter()
        .map(|&layers| {
            let cfg = ModelConfig {
                layers,
                ..model_config.clone()
            };
            let r = grid_search(bundle, &cfg, opts)?.report;
            Ok(SweepRow {
                x: layers as f64,
                model: cfg.label(),
                mean: r.mean,
                std: r.std,
            })
        })
        .collect()
}

/// Accuracy versus the ratio of random edges added to the graph.
pub fn sweep_noise(
    bundle: &DatasetBundle,
    model_config: &ModelConfig,
    ratios: &[f64],
    seed: u64,
    opts: &GridOptions,
) -> Result<Vec<SweepRow>> {
    ratios
        .iter()
        .map(|&ratio| {
            let noisy = bundle.with_graph(add_random_edges(&bundle.graph, ratio, seed)?)?;
            let r = grid_search(&noisy, model_config, opts)?.report;
            Ok(SweepRow {
                x: ratio,
                model: model_config.label(),
                mean: r.mean,
                std: r.std,
            })
        })
        .collect()
}

/// Writes `x,model,mean,std` rows.
pub fn write_sweep_csv(rows: &[SweepRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv(input: impl std::io::Read) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}
