use std::path::Path;

use cagnn_core::graph::{load_bundle, make_synthetic, save_bundle, SyntheticParams};
use cagnn_core::metrics::metric_report;
use cagnn_core::models::{alpha_histogram, load_checkpoint, write_alpha_csv, GraphContext, SpectralInstance, HISTOGRAM_BINS};
use cagnn_core::trainer::{grid_search, sweep_layers, sweep_noise, write_sweep_csv, GridOptions, SweepRow};
use cagnn_core::{DatasetBundle, Grid, MetricReport, Mode, ModelConfig, TrainConfig, TrainReport};
use serde::Serialize;

use crate::output::{check_dir_target, emit, json_bytes, write_atomic, StagedDir};
use crate::{
    AlphaHistArgs, CliError, Command, Format, GridArgs, KendallArgs, MetricsArgs, ModelArgs, NoisyEdgesArgs,
    ScheduleArgs, SpectralArgs, SweepLayersArgs, SynthArgs, TrainArgs,
};

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Metrics(a) => metrics(a),
        Command::Train(a) => train(a),
        Command::Grid(a) => grid(a),
        Command::SweepLayers(a) => sweep_layers_cmd(a),
        Command::NoisyEdges(a) => noisy_edges(a),
        Command::AlphaHist(a) => alpha_hist(a),
        Command::SpectralCheck(a) => spectral(a),
        Command::Synth(a) => synth(a),
        Command::Kendall(a) => kendall(a),
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn bundle(path: &Path) -> Result<DatasetBundle, CliError> {
    if !path.is_dir() {
        return Err(invalid(format!("bundle directory {} not found", path.display())));
    }
    Ok(load_bundle(path)?)
}

#[derive(Serialize)]
struct NamedReport<'a> {
    dataset: &'a str,
    #[serde(flatten)]
    report: &'a MetricReport,
}

fn metrics(a: MetricsArgs) -> Result<(), CliError> {
    let bundles = a.bundle.iter().map(|p| bundle(p)).collect::<Result<Vec<_>, _>>()?;
    let mut reports = Vec::with_capacity(bundles.len());
    for b in &bundles {
        reports.push(metric_report(&b.graph, &b.nodes.labels, b.num_classes(), a.row_weighting.into())?);
    }
    let bytes = match a.format {
        Format::Json => {
            let named: Vec<NamedReport<'_>> = bundles
                .iter()
                .zip(&reports)
                .map(|(b, r)| NamedReport { dataset: &b.name, report: r })
                .collect();
            if named.len() == 1 {
                json_bytes(&named[0])?
            } else {
                json_bytes(&named)?
            }
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["dataset", "num_nodes", "h_node", "h_edge", "h_neighbor"])?;
            for (b, r) in bundles.iter().zip(&reports) {
                w.write_record([
                    b.name.clone(),
                    r.num_nodes.to_string(),
                    r.h_node.to_string(),
                    r.h_edge.to_string(),
                    r.h_neighbor.to_string(),
                ])?;
            }
            w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?
        }
    };
    emit(a.out.as_deref(), &bytes)?;
    Ok(())
}

/// Validates the model and every grid point before any work starts.
fn grid_options(model: &ModelArgs, schedule: &ScheduleArgs, grid: Grid) -> Result<(ModelConfig, GridOptions), CliError> {
    let cfg = model.config();
    cfg.validate()?;
    let train = TrainConfig {
        max_epochs: schedule.epochs,
        patience: schedule.patience,
        seed: schedule.seed,
        ..TrainConfig::default()
    };
    for p in grid.points() {
        TrainConfig {
            lr: p.lr,
            weight_decay: p.weight_decay,
            dropout: p.dropout,
            ..train.clone()
        }
        .validate()?;
    }
    if schedule.max_splits == Some(0) {
        return Err(invalid("--max-splits must be at least 1"));
    }
    Ok((
        cfg,
        GridOptions {
            grid,
            train,
            jobs: schedule.jobs,
            max_splits: schedule.max_splits,
        },
    ))
}

fn finish_training(
    b: &DatasetBundle,
    cfg: &ModelConfig,
    opts: &GridOptions,
    out: Option<&Path>,
    checkpoint: Option<&Path>,
) -> Result<TrainReport, CliError> {
    let outcome = grid_search(b, cfg, opts)?;
    let r = &outcome.report;
    eprintln!(
        "{} on {}: {:.2} ± {:.2} over {} splits, {:.3} ms/epoch",
        r.model,
        r.dataset,
        r.mean,
        r.std,
        r.per_split_test.len(),
        r.ms_per_epoch
    );
    if let Some(path) = checkpoint {
        write_atomic(path, &serde_json::to_vec(&outcome.models[0].to_checkpoint())?)?;
    }
    emit(out, &json_bytes(r)?)?;
    Ok(outcome.report)
}

fn train(a: TrainArgs) -> Result<(), CliError> {
    let grid = Grid::single(a.lr, a.weight_decay, a.dropout);
    let (cfg, opts) = grid_options(&a.model, &a.schedule, grid)?;
    let b = bundle(&a.bundle)?;
    finish_training(&b, &cfg, &opts, a.out.as_deref(), a.checkpoint.as_deref())?;
    Ok(())
}

fn grid(a: GridArgs) -> Result<(), CliError> {
    let (cfg, opts) = grid_options(&a.model, &a.schedule, Grid::parse(&a.grids)?)?;
    let b = bundle(&a.bundle)?;
    finish_training(&b, &cfg, &opts, a.out.as_deref(), a.checkpoint.as_deref())?;
    Ok(())
}

fn emit_sweep(rows: &[SweepRow], out: Option<&Path>) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_sweep_csv(rows, &mut buf)?;
    emit(out, &buf)?;
    Ok(())
}

fn sweep_layers_cmd(a: SweepLayersArgs) -> Result<(), CliError> {
    let (cfg, opts) = grid_options(&a.model, &a.schedule, Grid::parse(&a.grids)?)?;
    if a.depths.is_empty() || a.depths.contains(&0) {
        return Err(invalid("--depths must list positive layer counts"));
    }
    let b = bundle(&a.bundle)?;
    let rows = sweep_layers(&b, &cfg, &a.depths, &opts)?;
    emit_sweep(&rows, a.out.as_deref())
}

fn noisy_edges(a: NoisyEdgesArgs) -> Result<(), CliError> {
    let (cfg, opts) = grid_options(&a.model, &a.schedule, Grid::parse(&a.grids)?)?;
    if a.ratios.is_empty() || a.ratios.iter().any(|r| !(0.0..=5.0).contains(r)) {
        return Err(invalid("--ratios must list values in [0, 5]"));
    }
    let b = bundle(&a.bundle)?;
    let rows = sweep_noise(&b, &cfg, &a.ratios, a.noise_seed.unwrap_or(a.schedule.seed), &opts)?;
    emit_sweep(&rows, a.out.as_deref())
}

#[derive(Serialize)]
struct LayerHistogram {
    layer: usize,
    mean: f64,
    counts: [usize; HISTOGRAM_BINS],
}

#[derive(Serialize)]
struct AlphaSummary {
    nodes: usize,
    bin_edges: Vec<f64>,
    layers: Vec<LayerHistogram>,
    mean: f64,
    counts: [usize; HISTOGRAM_BINS],
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn alpha_hist(a: AlphaHistArgs) -> Result<(), CliError> {
    let b = bundle(&a.bundle)?;
    let model = load_checkpoint(&a.checkpoint)?;
    if model.num_features != b.num_features() || model.num_classes != b.num_classes() {
        return Err(invalid(format!(
            "checkpoint expects {} features and {} classes, bundle has {} and {}",
            model.num_features,
            model.num_classes,
            b.num_features(),
            b.num_classes()
        )));
    }
    if model.config.mode != Mode::Cagnn || !model.config.mixer.is_gated() {
        return Err(invalid(format!(
            "checkpoint model {} with mixer {} has no gate values",
            model.config.label(),
            model.config.mixer
        )));
    }
    let ctx = GraphContext::new(&b.graph, &b.nodes.features, model.config.kernel)?;
    let alphas = model.trace(&ctx, None)?.alphas;

    let mut csv = Vec::new();
    write_alpha_csv(&alphas, &mut csv)?;
    write_atomic(&a.out, &csv)?;

    let all: Vec<f64> = alphas.iter().flatten().copied().collect();
    let summary = AlphaSummary {
        nodes: b.num_nodes(),
        bin_edges: (0..=HISTOGRAM_BINS).map(|i| i as f64 / HISTOGRAM_BINS as f64).collect(),
        layers: alphas
            .iter()
            .enumerate()
            .map(|(l, v)| LayerHistogram {
                layer: l + 1,
                mean: mean(v),
                counts: alpha_histogram(v),
            })
            .collect(),
        mean: mean(&all),
        counts: alpha_histogram(&all),
    };
    let bytes = json_bytes(&summary)?;
    if let Some(p) = &a.hist_out {
        write_atomic(p, &bytes)?;
    }
    emit(None, &bytes)?;
    Ok(())
}

#[derive(Serialize)]
struct SpectralSummary {
    instances: usize,
    nodes: usize,
    order: usize,
    max_deviation: f64,
    tolerance: f64,
    pass: bool,
}

fn spectral(a: SpectralArgs) -> Result<(), CliError> {
    if a.nodes < 2 || a.features == 0 || a.order == 0 || a.instances == 0 {
        return Err(invalid("--nodes must be at least 2; --features, --order and --instances at least 1"));
    }
    let mut worst = 0.0f64;
    for i in 0..a.instances as u64 {
        let inst = SpectralInstance::random(a.nodes, a.features, a.order, a.seed.wrapping_add(i))?;
        worst = worst.max(inst.check()?);
    }
    let summary = SpectralSummary {
        instances: a.instances,
        nodes: a.nodes,
        order: a.order,
        max_deviation: worst,
        tolerance: a.tolerance,
        pass: worst <= a.tolerance,
    };
    emit(a.out.as_deref(), &json_bytes(&summary)?)?;
    if !summary.pass {
        return Err(CliError::Runtime(format!(
            "deviation {worst:e} exceeds tolerance {:e}",
            a.tolerance
        )));
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    let params = SyntheticParams {
        feature_noise: a.feature_noise,
        pattern: a.pattern,
        ..SyntheticParams::new(a.kind, a.n_per_class, a.classes, a.degree, a.seed)
    };
    check_dir_target(&a.out).map_err(|e| invalid(e.to_string()))?;
    let b = make_synthetic(&params)?;
    let staged = StagedDir::new(&a.out)?;
    save_bundle(&b, staged.path())?;
    staged.commit()?;
    eprintln!(
        "wrote {} ({} nodes, {} undirected edges) to {}",
        b.name,
        b.num_nodes(),
        b.graph.undirected_edge_count(),
        a.out.display()
    );
    Ok(())
}

fn kendall(a: KendallArgs) -> Result<(), CliError> {
    let results = crate::kendall::Table::read(&a.results)?;
    let metrics = crate::kendall::Table::read(&a.metrics)?;
    let report = crate::kendall::report(
        &results,
        &metrics,
        &crate::kendall::Options {
            accuracy_column: &a.accuracy_column,
            min_nodes: a.min_nodes,
            negate: &a.negate,
        },
    )?;
    emit(a.out.as_deref(), &json_bytes(&report)?)?;
    Ok(())
}
