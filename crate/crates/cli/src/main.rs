//! `cagnn`: metrics, training, sweeps and checks over dataset bundles.

mod commands;
mod kendall;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use cagnn_core::graph::SyntheticKind;
use cagnn_core::metrics::RowWeighting;
use cagnn_core::{Kernel, Mixer, Mode, ModelConfig, Norm};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or inputs; exit code 1.
    Validation(String),
    /// Failure after validation passed; exit code 2.
    Runtime(String),
}

impl From<cagnn_core::Error> for CliError {
    fn from(e: cagnn_core::Error) -> Self {
        use cagnn_core::Error as E;
        match e {
            E::Invalid(_)
            | E::MissingFile { .. }
            | E::Parse { .. }
            | E::LabelOutOfRange { .. }
            | E::DanglingEdge { .. }
            | E::Saturated { .. } => CliError::Validation(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn parse_with<T: FromStr<Err = cagnn_core::Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: cagnn_core::Error| e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "cagnn", version, about = "Neighbor-identifiability metrics and gated GNN experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Homophily ratios and neighbor-identifiability entropy of one or more bundles
    Metrics(MetricsArgs),
    /// Train with one hyper-parameter setting on every split
    Train(TrainArgs),
    /// Per-split grid search over learning rate, weight decay and dropout
    Grid(GridArgs),
    /// Test accuracy versus depth
    SweepLayers(SweepLayersArgs),
    /// Test accuracy versus the ratio of random edges added
    NoisyEdges(NoisyEdgesArgs),
    /// Per-node gate values of a trained gated model, with a 20-bin histogram
    AlphaHist(AlphaHistArgs),
    /// Compare the layer recursion with its closed-form polynomial filter
    SpectralCheck(SpectralArgs),
    /// Generate a synthetic bundle
    Synth(SynthArgs),
    /// Kendall tau between metric columns and an accuracy column
    Kendall(KendallArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Convolution kernel: gcn, gin, gat or mlp
    #[arg(long, default_value = "gcn", value_parser = parse_with::<Kernel>)]
    pub kernel: Kernel,
    /// cagnn (gated, decoupled) or vanilla
    #[arg(long, default_value = "cagnn", value_parser = parse_with::<Mode>)]
    pub mode: Mode,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    /// linear, add, concat, global, unshared, mlp2 or mlp3
    #[arg(long, default_value = "linear", value_parser = parse_with::<Mixer>)]
    pub mixer: Mixer,
    /// l2, none or layernorm
    #[arg(long, default_value = "l2", value_parser = parse_with::<Norm>)]
    pub norm: Norm,
    /// Hidden width of the GIN update MLP
    #[arg(long, default_value_t = 64)]
    pub gin_mlp_hidden: usize,
    /// ReLU after each convolution in the gated model
    #[arg(long)]
    pub gc_activation: bool,
}

impl ModelArgs {
    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            layers: self.layers,
            hidden: self.hidden,
            mixer: self.mixer,
            norm: self.norm,
            gin_mlp_hidden: self.gin_mlp_hidden,
            gc_activation: self.gc_activation,
            ..ModelConfig::new(self.kernel, self.mode)
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct ScheduleArgs {
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    /// Epochs without validation improvement before stopping
    #[arg(long, default_value_t = 100)]
    pub patience: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses all cores
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Use only the first N splits of the bundle
    #[arg(long)]
    pub max_splits: Option<usize>,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// Bundle directory; repeat for several datasets
    #[arg(long, required = true)]
    pub bundle: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Weighting::Distribution)]
    pub row_weighting: Weighting,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum Weighting {
    Distribution,
    Counts,
}

impl From<Weighting> for RowWeighting {
    fn from(w: Weighting) -> Self {
        match w {
            Weighting::Distribution => RowWeighting::Distribution,
            Weighting::Counts => RowWeighting::Counts,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, alias = "wd", default_value_t = 5e-4)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    /// Report JSON path (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Save the model selected on the first split
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Grid such as "lr=0.01,0.05;wd=5e-4;dropout=0,0.5"; omitted keys use
    /// lr {0.001,0.01,0.05}, wd {5e-5,5e-4}, dropout {0,0.5}
    #[arg(long, default_value = "")]
    pub grids: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepLayersArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long, default_value = "")]
    pub grids: String,
    /// Comma-separated depths
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32")]
    pub depths: Vec<usize>,
    /// CSV path (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct NoisyEdgesArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long, default_value = "")]
    pub grids: String,
    /// Comma-separated ratios of added edges to existing edges
    #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.6,0.8,1.0")]
    pub ratios: Vec<f64>,
    /// Seed for edge sampling (defaults to --seed)
    #[arg(long)]
    pub noise_seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AlphaHistArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// CSV of node_id,layer,alpha
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the histogram JSON here (it always goes to stdout)
    #[arg(long)]
    pub hist_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SpectralArgs {
    #[arg(long, default_value_t = 8)]
    pub nodes: usize,
    #[arg(long, default_value_t = 3)]
    pub features: usize,
    /// Number of gated layers K
    #[arg(long, default_value_t = 4)]
    pub order: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random instances, seeded seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    pub instances: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// pure-homophily, bipartite, random-neighbor or patterned
    #[arg(long, value_parser = parse_with::<SyntheticKind>)]
    pub kind: SyntheticKind,
    #[arg(long, default_value_t = 200)]
    pub n_per_class: usize,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long, default_value_t = 10)]
    pub degree: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standard deviation of the Gaussian noise on one-hot features
    #[arg(long, default_value_t = 0.1)]
    pub feature_noise: f64,
    /// Comma-separated base distribution for the patterned kind
    #[arg(long, value_delimiter = ',')]
    pub pattern: Option<Vec<f64>>,
    /// Bundle directory to create
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct KendallArgs {
    /// CSV with a dataset column and an accuracy column
    #[arg(long)]
    pub results: PathBuf,
    /// CSV with a dataset column, optional num_nodes, and metric columns
    #[arg(long)]
    pub metrics: PathBuf,
    #[arg(long, default_value = "accuracy")]
    pub accuracy_column: String,
    /// Keep only datasets with more than this many nodes
    #[arg(long)]
    pub min_nodes: Option<usize>,
    /// Metric columns to negate before ranking
    #[arg(long, value_delimiter = ',', default_value = "h_neighbor")]
    pub negate: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Metrics(_) => "metrics",
        Command::Train(_) => "train",
        Command::Grid(_) => "grid",
        Command::SweepLayers(_) => "sweep-layers",
        Command::NoisyEdges(_) => "noisy-edges",
        Command::AlphaHist(_) => "alpha-hist",
        Command::SpectralCheck(_) => "spectral-check",
        Command::Synth(_) => "synth",
        Command::Kendall(_) => "kendall",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let name = subcommand_name(&cli.command);
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            let mut cmd = Cli::command();
            cmd.build();
            let usage = cmd
                .find_subcommand_mut(name)
                .map(|c| c.render_usage().to_string())
                .unwrap_or_default();
            eprintln!("error: {msg}\n\n{usage}\n\nFor more information, try 'cagnn {name} --help'.");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
