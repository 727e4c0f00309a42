//! Node classifiers: plain GCN/GIN/GAT/MLP stacks and the gated decoupled
//! model that mixes each convolution output into a running representation
//! with a learned per-node gate.
//!
//! Gated forward pass with `L` layers:
//!
//! ```text
//! H⁰ = S⁰ = Norm(enc(X))
//! Hˡ = Norm(GC(Hˡ⁻¹))
//! αˡ = σ(f_mixer(Sˡ⁻¹ ∥ Hˡ))
//! Sˡ = Norm((1 - αˡ) Sˡ⁻¹ + αˡ Hˡ)
//! Z  = log_softmax(dec(Sᴸ))
//! ```

mod checkpoint;
mod layers;
mod propagation;
pub mod spectral;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{SparseMatrix, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::Matrix;

pub use checkpoint::{alpha_histogram, load_checkpoint, save_checkpoint, write_alpha_csv, Checkpoint, HISTOGRAM_BINS};
pub use layers::{gat_layer, gcn_layer, gin_layer, GatParams, GinParams, Input, GAT_SLOPE};
pub use propagation::{build_propagation, normalized_adjacency};
pub use spectral::{spectral_check, SpectralInstance};

/// Epsilon inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;

macro_rules! string_enum {
    ($ty:ident { $($variant:ident => $name:literal),+ $(,)? }) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
        pub enum $ty {
            $(#[serde(rename = $name)] $variant),+
        }

        impl $ty {
            pub const ALL: &'static [$ty] = &[$($ty::$variant),+];

            pub fn name(self) -> &'static str {
                match self {
                    $($ty::$variant => $name),+
                }
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    other => {
                        let valid: Vec<&str> = vec![$($name),+];
                        Err(Error::Invalid(format!(
                            "unknown {} {other:?} (expected one of {})",
                            stringify!($ty).to_lowercase(),
                            valid.join(", ")
                        )))
                    }
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

string_enum!(Kernel { Gcn => "gcn", Gin => "gin", Gat => "gat", Mlp => "mlp" });
string_enum!(Mode { Cagnn => "cagnn", Vanilla => "vanilla" });
string_enum!(Mixer {
    Linear => "linear",
    Add => "add",
    Concat => "concat",
    Global => "global",
    Unshared => "unshared",
    Mlp2 => "mlp2",
    Mlp3 => "mlp3",
});
string_enum!(Norm { L2 => "l2", None => "none", LayerNorm => "layernorm" });

impl Mixer {
    /// Whether the mixer produces a sigmoid gate `α`.
    pub fn is_gated(self) -> bool {
        !matches!(self, Mixer::Add | Mixer::Concat)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kernel: Kernel,
    pub mode: Mode,
    pub layers: usize,
    pub hidden: usize,
    pub mixer: Mixer,
    pub norm: Norm,
    pub dropout: f64,
    /// Only single-head attention is supported.
    pub gat_heads: usize,
    pub gin_mlp_hidden: usize,
    /// Apply ReLU after each convolution inside the gated model.
    pub gc_activation: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kernel: Kernel::Gcn,
            mode: Mode::Cagnn,
            layers: 2,
            hidden: 64,
            mixer: Mixer::Linear,
            norm: Norm::L2,
            dropout: 0.5,
            gat_heads: 1,
            gin_mlp_hidden: 64,
            gc_activation: false,
        }
    }
}

impl ModelConfig {
    pub fn new(kernel: Kernel, mode: Mode) -> Self {
        Self {
            kernel,
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Invalid("layers must be at least 1".into()));
        }
        if self.hidden == 0 || self.gin_mlp_hidden == 0 {
            return Err(Error::Invalid("hidden sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.gat_heads != 1 {
            return Err(Error::Invalid(format!(
                "gat_heads = {}: only single-head attention is supported",
                self.gat_heads
            )));
        }
        if self.mode == Mode::Cagnn && self.kernel == Kernel::Mlp {
            return Err(Error::Invalid(
                "the gated model needs a graph convolution; use --mode vanilla with the mlp kernel".into(),
            ));
        }
        Ok(())
    }

    /// Short identifier such as `cagnn-gcn` or `gcn`.
    pub fn label(&self) -> String {
        match self.mode {
            Mode::Cagnn => format!("cagnn-{}", self.kernel),
            Mode::Vanilla => self.kernel.to_string(),
        }
    }
}

/// Named parameter arrays in a fixed order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    pub names: Vec<String>,
    pub values: Vec<Matrix>,
}

impl ParamStore {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|m| m.data().len()).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.names.iter().position(|n| n == name).map(|i| &self.values[i])
    }
}

struct Builder {
    rng: ChaCha8Rng,
    store: ParamStore,
}

impl Builder {
    fn push(&mut self, name: String, m: Matrix) -> usize {
        self.store.names.push(name);
        self.store.values.push(m);
        self.store.values.len() - 1
    }

    fn glorot(&mut self, name: String, rows: usize, cols: usize) -> usize {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let rng = &mut self.rng;
        let m = Matrix::from_fn(rows, cols, |_, _| rng.random_range(-limit..limit));
        self.push(name, m)
    }

    fn zeros(&mut self, name: String, rows: usize, cols: usize) -> usize {
        self.push(name, Matrix::zeros(rows, cols))
    }

    fn norm_site(&mut self, norm: Norm, name: &str, width: usize) -> Option<NormSite> {
        (norm == Norm::LayerNorm).then(|| NormSite {
            gamma: self.push(format!("{name}.gamma"), Matrix::filled(1, width, 1.0)),
            beta: self.zeros(format!("{name}.beta"), 1, width),
        })
    }

    fn conv(&mut self, kernel: Kernel, name: &str, fan_in: usize, fan_out: usize, gin_hidden: usize) -> Conv {
        match kernel {
            Kernel::Gcn => Conv::Gcn {
                w: self.glorot(format!("{name}.w"), fan_in, fan_out),
            },
            Kernel::Gin => Conv::Gin {
                w1: self.glorot(format!("{name}.w1"), fan_in, gin_hidden),
                b1: self.zeros(format!("{name}.b1"), 1, gin_hidden),
                w2: self.glorot(format!("{name}.w2"), gin_hidden, fan_out),
                b2: self.zeros(format!("{name}.b2"), 1, fan_out),
                eps: self.zeros(format!("{name}.eps"), 1, 1),
            },
            Kernel::Gat => Conv::Gat {
                w: self.glorot(format!("{name}.w"), fan_in, fan_out),
                a_dst: self.glorot(format!("{name}.a_dst"), fan_out, 1),
                a_src: self.glorot(format!("{name}.a_src"), fan_out, 1),
            },
            Kernel::Mlp => Conv::Linear {
                w: self.glorot(format!("{name}.w"), fan_in, fan_out),
                b: self.zeros(format!("{name}.b"), 1, fan_out),
            },
        }
    }

    fn dense_stack(&mut self, name: &str, dims: &[usize]) -> Vec<(usize, usize)> {
        dims.windows(2)
            .enumerate()
            .map(|(i, d)| {
                (
                    self.glorot(format!("{name}.w{}", i + 1), d[0], d[1]),
                    self.zeros(format!("{name}.b{}", i + 1), 1, d[1]),
                )
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
struct NormSite {
    gamma: usize,
    beta: usize,
}

#[derive(Clone, Debug)]
enum Conv {
    Gcn { w: usize },
    Gin { w1: usize, b1: usize, w2: usize, b2: usize, eps: usize },
    Gat { w: usize, a_dst: usize, a_src: usize },
    Linear { w: usize, b: usize },
}

#[derive(Clone, Debug)]
enum MixerParams {
    None,
    /// Dense stack `2d → … → 1`; one stack per layer, or a single shared one.
    Stacks(Vec<Vec<(usize, usize)>>),
    /// One scalar logit per layer.
    Global(Vec<usize>),
}

#[derive(Clone, Debug)]
struct GatedLayout {
    enc_w: usize,
    enc_b: usize,
    enc_norm: Option<NormSite>,
    convs: Vec<Conv>,
    conv_norms: Vec<Option<NormSite>>,
    mixer: MixerParams,
    mix_norms: Vec<Option<NormSite>>,
    dec_w: usize,
    dec_b: usize,
}

#[derive(Clone, Debug)]
enum Layout {
    Gated(GatedLayout),
    Plain(Vec<Conv>),
}

/// Graph-side inputs shared by every forward pass on one dataset.
#[derive(Clone, Debug)]
pub struct GraphContext {
    pub kernel: Kernel,
    pub features: Arc<SparseMatrix>,
    pub propagation: Arc<SparseMatrix>,
}

impl GraphContext {
    pub fn new(graph: &Graph, features: &Matrix, kernel: Kernel) -> Result<Self> {
        if features.rows() != graph.num_nodes() {
            return Err(Error::Shape {
                op: "graph context",
                left: (graph.num_nodes(), graph.num_nodes()),
                right: features.shape(),
            });
        }
        Ok(Self {
            kernel,
            features: Arc::new(SparseMatrix::from_dense(features)),
            propagation: build_propagation(graph, kernel),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ForwardOptions {
    pub training: bool,
    /// Seeds the dropout masks.
    pub seed: u64,
    /// Replaces every gate with this constant.
    pub gate_override: Option<f64>,
}

impl ForwardOptions {
    pub fn eval() -> Self {
        Self::default()
    }

    pub fn train(seed: u64) -> Self {
        Self {
            training: true,
            seed,
            gate_override: None,
        }
    }
}

pub struct Forward<'t> {
    /// Row-wise log-probabilities, N×C.
    pub logits: Var<'t>,
    /// Per-layer gates, each N×1; empty for ungated models.
    pub alphas: Vec<Var<'t>>,
    /// Representation fed to the decoder (before dropout).
    pub final_repr: Var<'t>,
}

impl Forward<'_> {
    pub fn trace(&self) -> ForwardTrace {
        ForwardTrace {
            alphas: self.alphas.iter().map(|a| a.value().data().to_vec()).collect(),
            final_repr: self.final_repr.to_matrix(),
            logits: self.logits.to_matrix(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    /// `alphas[l][i]` is the gate of node `i` at layer `l + 1`.
    pub alphas: Vec<Vec<f64>>,
    pub final_repr: Matrix,
    pub logits: Matrix,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub num_features: usize,
    pub num_classes: usize,
    pub params: ParamStore,
    layout: Layout,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn site_seed(seed: u64, site: u64) -> u64 {
    splitmix(seed ^ splitmix(site))
}

impl Model {
    /// Glorot-uniform weights, zero biases, unit layer-norm gains; `seed`
    /// fixes every draw.
    pub fn new(config: ModelConfig, num_features: usize, num_classes: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if num_features == 0 || num_classes == 0 {
            return Err(Error::Invalid("model needs at least one feature and one class".into()));
        }
        let mut b = Builder {
            rng: ChaCha8Rng::seed_from_u64(seed),
            store: ParamStore::default(),
        };
        let layout = match config.mode {
            Mode::Vanilla => {
                let mut dims = vec![num_features];
                dims.extend(std::iter::repeat_n(config.hidden, config.layers - 1));
                dims.push(num_classes);
                let convs = dims
                    .windows(2)
                    .enumerate()
                    .map(|(l, d)| b.conv(config.kernel, &format!("layer{}", l + 1), d[0], d[1], config.gin_mlp_hidden))
                    .collect();
                Layout::Plain(convs)
            }
            Mode::Cagnn => Layout::Gated(Self::gated_layout(&config, &mut b, num_features, num_classes)),
        };
        Ok(Self {
            config,
            num_features,
            num_classes,
            params: b.store,
            layout,
        })
    }

    fn gated_layout(c: &ModelConfig, b: &mut Builder, num_features: usize, num_classes: usize) -> GatedLayout {
        let d = c.hidden;
        let enc_w = b.glorot("enc.w".into(), num_features, d);
        let enc_b = b.zeros("enc.b".into(), 1, d);
        let enc_norm = b.norm_site(c.norm, "enc.norm", d);
        let mut convs = Vec::with_capacity(c.layers);
        let mut conv_norms = Vec::with_capacity(c.layers);
        for l in 1..=c.layers {
            convs.push(b.conv(c.kernel, &format!("gc{l}"), d, d, c.gin_mlp_hidden));
            conv_norms.push(b.norm_site(c.norm, &format!("gc{l}.norm"), d));
        }
        let stack_dims = |depth: usize| -> Vec<usize> {
            let mut dims = vec![2 * d; depth];
            dims.push(1);
            dims
        };
        let mixer = match c.mixer {
            Mixer::Add | Mixer::Concat => MixerParams::None,
            Mixer::Linear => MixerParams::Stacks(vec![b.dense_stack("mixer", &stack_dims(1))]),
            Mixer::Mlp2 => MixerParams::Stacks(vec![b.dense_stack("mixer", &stack_dims(2))]),
            Mixer::Mlp3 => MixerParams::Stacks(vec![b.dense_stack("mixer", &stack_dims(3))]),
            Mixer::Unshared => MixerParams::Stacks(
                (1..=c.layers)
                    .map(|l| b.dense_stack(&format!("mixer{l}"), &stack_dims(1)))
                    .collect(),
            ),
            Mixer::Global => MixerParams::Global(
                (1..=c.layers)
                    .map(|l| b.zeros(format!("mixer{l}.logit"), 1, 1))
                    .collect(),
            ),
        };
        let mut mix_norms = Vec::with_capacity(c.layers);
        for l in 1..=c.layers {
            let (apply, width) = match c.mixer {
                Mixer::Concat => (l == 1 || l == c.layers, d * (l + 1)),
                _ => (true, d),
            };
            mix_norms.push(if apply {
                b.norm_site(c.norm, &format!("mix{l}.norm"), width)
            } else {
                None
            });
        }
        let dec_in = if c.mixer == Mixer::Concat { d * (c.layers + 1) } else { d };
        let dec_w = b.glorot("dec.w".into(), dec_in, num_classes);
        let dec_b = b.zeros("dec.b".into(), 1, num_classes);
        GatedLayout {
            enc_w,
            enc_b,
            enc_norm,
            convs,
            conv_norms,
            mixer,
            mix_norms,
            dec_w,
            dec_b,
        }
    }

    /// Number of scalar parameters in the gate function.
    pub fn mixer_param_count(&self) -> usize {
        let Layout::Gated(g) = &self.layout else {
            return 0;
        };
        let size = |i: usize| self.params.values[i].data().len();
        match &g.mixer {
            MixerParams::None => 0,
            MixerParams::Stacks(stacks) => stacks
                .iter()
                .flatten()
                .map(|&(w, b)| size(w) + size(b))
                .sum(),
            MixerParams::Global(ids) => ids.iter().map(|&i| size(i)).sum(),
        }
    }

    /// Registers every parameter on `tape` in store order.
    pub fn param_vars<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.params.values.iter().map(|m| tape.param(m.clone())).collect()
    }

    pub fn forward<'t>(&self, tape: &'t Tape, ctx: &GraphContext, opts: ForwardOptions) -> Result<(Forward<'t>, Vec<Var<'t>>)> {
        let vars = self.param_vars(tape);
        let f = self.forward_with(tape, &vars, ctx, opts)?;
        Ok((f, vars))
    }

    /// Forward pass with caller-supplied parameter values, in store order.
    pub fn forward_with<'t>(
        &self,
        tape: &'t Tape,
        params: &[Var<'t>],
        ctx: &GraphContext,
        opts: ForwardOptions,
    ) -> Result<Forward<'t>> {
        if params.len() != self.params.len() {
            return Err(Error::Invalid(format!(
                "expected {} parameter arrays, got {}",
                self.params.len(),
                params.len()
            )));
        }
        if ctx.kernel != self.config.kernel {
            return Err(Error::Invalid(format!(
                "graph context built for {} but model uses {}",
                ctx.kernel, self.config.kernel
            )));
        }
        if ctx.features.cols() != self.num_features {
            return Err(Error::Shape {
                op: "model input",
                left: (ctx.num_nodes(), self.num_features),
                right: ctx.features.shape(),
            });
        }
        let p = self.config.dropout;
        let x = if opts.training && p > 0.0 {
            Arc::new(ctx.features.dropout(p, site_seed(opts.seed, 0)))
        } else {
            Arc::clone(&ctx.features)
        };
        match &self.layout {
            Layout::Plain(convs) => self.plain_forward(tape, params, ctx, &x, convs, opts),
            Layout::Gated(g) => self.gated_forward(tape, params, ctx, &x, g, opts),
        }
    }

    fn conv<'t>(&self, tape: &'t Tape, params: &[Var<'t>], ctx: &GraphContext, h: Input<'_, 't>, conv: &Conv) -> Result<Var<'t>> {
        let prop = &ctx.propagation;
        match *conv {
            Conv::Gcn { w } => gcn_layer(tape, prop, h, params[w]),
            Conv::Gin { w1, b1, w2, b2, eps } => gin_layer(
                tape,
                prop,
                h,
                GinParams {
                    w1: params[w1],
                    b1: params[b1],
                    w2: params[w2],
                    b2: params[b2],
                    eps: params[eps],
                },
            ),
            Conv::Gat { w, a_dst, a_src } => gat_layer(
                tape,
                prop,
                h,
                GatParams {
                    w: params[w],
                    a_dst: params[a_dst],
                    a_src: params[a_src],
                },
            ),
            Conv::Linear { w, b } => h.project(tape, params[w])?.add_row(params[b]),
        }
    }

    fn plain_forward<'t>(
        &self,
        tape: &'t Tape,
        params: &[Var<'t>],
        ctx: &GraphContext,
        x: &Arc<SparseMatrix>,
        convs: &[Conv],
        opts: ForwardOptions,
    ) -> Result<Forward<'t>> {
        let mut h = Input::Sparse(x);
        let mut last_input = None;
        let mut out = None;
        for (l, conv) in convs.iter().enumerate() {
            let z = self.conv(tape, params, ctx, h, conv)?;
            if l + 1 < convs.len() {
                let a = z.relu();
                last_input = Some(a);
                let a = a.dropout(self.config.dropout, opts.training, site_seed(opts.seed, l as u64 + 1));
                h = Input::Dense(a);
            } else {
                out = Some(z);
            }
        }
        let z = out.expect("at least one layer");
        Ok(Forward {
            logits: z.log_softmax_rows(),
            alphas: Vec::new(),
            final_repr: last_input.unwrap_or(z),
        })
    }

    fn norm<'t>(&self, params: &[Var<'t>], x: Var<'t>, site: &Option<NormSite>) -> Result<Var<'t>> {
        match self.config.norm {
            Norm::L2 => Ok(x.l2_normalize_rows()),
            Norm::None => Ok(x),
            Norm::LayerNorm => match site {
                Some(s) => x
                    .layer_norm_rows(LAYER_NORM_EPS)
                    .mul_row(params[s.gamma])?
                    .add_row(params[s.beta]),
                None => Ok(x),
            },
        }
    }

    fn gated_forward<'t>(
        &self,
        tape: &'t Tape,
        params: &[Var<'t>],
        ctx: &GraphContext,
        x: &Arc<SparseMatrix>,
        g: &GatedLayout,
        opts: ForwardOptions,
    ) -> Result<Forward<'t>> {
        let n = ctx.num_nodes();
        let mixer = self.config.mixer;
        if let Some(a) = opts.gate_override {
            if !mixer.is_gated() {
                return Err(Error::Invalid(format!("gate override needs a gated mixer, not {mixer}")));
            }
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Invalid(format!("gate override {a} outside [0, 1]")));
            }
        }
        let enc = Input::Sparse(x).project(tape, params[g.enc_w])?.add_row(params[g.enc_b])?;
        let h0 = self.norm(params, enc, &g.enc_norm)?;
        let mut h = h0;
        let mut s = h0;
        let mut alphas = Vec::with_capacity(g.convs.len());
        let ones = (mixer == Mixer::Global).then(|| tape.constant(Matrix::filled(n, 1, 1.0)));

        for l in 0..g.convs.len() {
            let mut z = self.conv(tape, params, ctx, Input::Dense(h), &g.convs[l])?;
            if self.config.gc_activation {
                z = z.relu();
            }
            h = self.norm(params, z, &g.conv_norms[l])?;

            let mixed = match mixer {
                Mixer::Add => s.add(h)?,
                Mixer::Concat => s.concat_cols(h)?,
                _ => {
                    let alpha = match opts.gate_override {
                        Some(a) => tape.constant(Matrix::filled(n, 1, a)),
                        None => self.gate(params, g, l, s, h, ones)?,
                    };
                    debug_assert!(
                        opts.gate_override.is_some() || alpha.value().data().iter().all(|&a| a > 0.0 && a < 1.0),
                        "sigmoid gate left (0, 1)"
                    );
                    alphas.push(alpha);
                    alpha.broadcast_col(h)?.add(alpha.one_minus().broadcast_col(s)?)?
                }
            };
            // concat normalizes only after the first and last layers
            let normalize = mixer != Mixer::Concat || l == 0 || l + 1 == g.convs.len();
            s = if normalize {
                self.norm(params, mixed, &g.mix_norms[l])?
            } else {
                mixed
            };
        }

        let dropped = s.dropout(self.config.dropout, opts.training, site_seed(opts.seed, 1 << 32));
        let logits = dropped
            .matmul(params[g.dec_w])?
            .add_row(params[g.dec_b])?
            .log_softmax_rows();
        Ok(Forward {
            logits,
            alphas,
            final_repr: s,
        })
    }

    fn gate<'t>(
        &self,
        params: &[Var<'t>],
        g: &GatedLayout,
        layer: usize,
        s: Var<'t>,
        h: Var<'t>,
        ones: Option<Var<'t>>,
    ) -> Result<Var<'t>> {
        match &g.mixer {
            MixerParams::Global(ids) => {
                let ones = ones.expect("global mixer allocates a ones column");
                params[ids[layer]].sigmoid().scale_by(ones)
            }
            MixerParams::Stacks(stacks) => {
                let stack = if stacks.len() == 1 { &stacks[0] } else { &stacks[layer] };
                let mut z = s.concat_cols(h)?;
                for (i, &(w, b)) in stack.iter().enumerate() {
                    z = z.matmul(params[w])?.add_row(params[b])?;
                    if i + 1 < stack.len() {
                        z = z.relu();
                    }
                }
                Ok(z.sigmoid())
            }
            MixerParams::None => unreachable!("ungated mixers never reach gate()"),
        }
    }

    /// Evaluation-mode forward returning plain values.
    pub fn trace(&self, ctx: &GraphContext, gate_override: Option<f64>) -> Result<ForwardTrace> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = self.params.values.iter().map(|m| tape.constant(m.clone())).collect();
        let opts = ForwardOptions {
            gate_override,
            ..ForwardOptions::eval()
        };
        Ok(self.forward_with(&tape, &vars, ctx, opts)?.trace())
    }

    /// Evaluation-mode log-probabilities.
    pub fn predict(&self, ctx: &GraphContext) -> Result<Matrix> {
        Ok(self.trace(ctx, None)?.logits)
    }
}

/// Row-wise argmax.
pub fn argmax_rows(m: &Matrix) -> Vec<usize> {
    (0..m.rows())
        .map(|i| {
            m.row(i)
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, &v)| if v > best.1 { (j, v) } else { best })
                .0
        })
        .collect()
}

/// Percentage of `idx` whose prediction matches the label.
pub fn accuracy(logits: &Matrix, labels: &[usize], idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    let pred = argmax_rows(logits);
    let hits = idx.iter().filter(|&&i| pred[i] == labels[i]).count();
    100.0 * hits as f64 / idx.len() as f64
}

#[cfg(test)]
mod tests;
