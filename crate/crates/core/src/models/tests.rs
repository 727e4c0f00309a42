use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::check::check_gradients;
use crate::autodiff::l2_normalize_rows;

fn toy_graph() -> Graph {
    Graph::from_edges(7, &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 3), (1, 5)]).unwrap()
}

fn toy_features(n: usize, f: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // keep some exact zeros so the sparse path is exercised
    Matrix::from_fn(n, f, |_, _| if rng.random::<f64>() < 0.3 { 0.0 } else { rng.random_range(-1.0..1.0) })
}

fn small(kernel: Kernel, mode: Mode) -> ModelConfig {
    ModelConfig {
        hidden: 4,
        gin_mlp_hidden: 3,
        layers: 2,
        ..ModelConfig::new(kernel, mode)
    }
}

fn dense_relu(m: &Matrix) -> Matrix {
    m.map(|x| x.max(0.0))
}

fn add_bias(m: &Matrix, b: &Matrix) -> Matrix {
    Matrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)] + b[(0, j)])
}

#[test]
fn gated_gcn_matches_dense_oracle() {
    let g = toy_graph();
    let x = toy_features(7, 5, 1);
    let mut cfg = small(Kernel::Gcn, Mode::Cagnn);
    cfg.layers = 3;
    let model = Model::new(cfg, 5, 3, 11).unwrap();
    let ctx = GraphContext::new(&g, &x, Kernel::Gcn).unwrap();
    let trace = model.trace(&ctx, None).unwrap();

    // independent dense computation from the named parameters
    let p = build_propagation(&g, Kernel::Gcn).to_dense();
    let get = |n: &str| model.params.get(n).unwrap().clone();
    let sigmoid = |z: f64| 1.0 / (1.0 + (-z).exp());
    let h0 = l2_normalize_rows(&add_bias(&x.matmul(&get("enc.w")).unwrap(), &get("enc.b")));
    let (mut h, mut s) = (h0.clone(), h0);
    let (wm, bm) = (get("mixer.w1"), get("mixer.b1"));
    for l in 1..=3 {
        h = l2_normalize_rows(&p.matmul(&h.matmul(&get(&format!("gc{l}.w"))).unwrap()).unwrap());
        let mut mixed = Matrix::zeros(7, 4);
        for i in 0..7 {
            let z: f64 = (0..4).map(|j| s[(i, j)] * wm[(j, 0)] + h[(i, j)] * wm[(4 + j, 0)]).sum::<f64>() + bm[(0, 0)];
            let a = sigmoid(z);
            assert!((trace.alphas[l - 1][i] - a).abs() < 1e-12);
            for j in 0..4 {
                mixed[(i, j)] = (1.0 - a) * s[(i, j)] + a * h[(i, j)];
            }
        }
        s = l2_normalize_rows(&mixed);
    }
    let z = add_bias(&s.matmul(&get("dec.w")).unwrap(), &get("dec.b"));
    let oracle = crate::autodiff::log_softmax_rows(&z);
    assert!(trace.final_repr.max_abs_diff(&s) < 1e-12);
    assert!(trace.logits.max_abs_diff(&oracle) < 1e-12);
}

#[test]
fn vanilla_gin_matches_dense_oracle() {
    let g = toy_graph();
    let x = toy_features(7, 5, 2);
    let model = Model::new(small(Kernel::Gin, Mode::Vanilla), 5, 3, 5).unwrap();
    let ctx = GraphContext::new(&g, &x, Kernel::Gin).unwrap();
    let logits = model.predict(&ctx).unwrap();

    let mut a = Matrix::zeros(7, 7);
    for (u, v) in g.edges() {
        a[(u, v)] = 1.0;
        a[(v, u)] = 1.0;
    }
    let get = |n: &str| model.params.get(n).unwrap().clone();
    let gin = |h: &Matrix, l: usize| {
        let eps = get(&format!("layer{l}.eps"))[(0, 0)];
        let mut agg = a.matmul(h).unwrap();
        agg.add_assign(&h.scale(1.0 + eps));
        let hid = dense_relu(&add_bias(&agg.matmul(&get(&format!("layer{l}.w1"))).unwrap(), &get(&format!("layer{l}.b1"))));
        add_bias(&hid.matmul(&get(&format!("layer{l}.w2"))).unwrap(), &get(&format!("layer{l}.b2")))
    };
    let h1 = dense_relu(&gin(&x, 1));
    let oracle = crate::autodiff::log_softmax_rows(&gin(&h1, 2));
    assert!(logits.max_abs_diff(&oracle) < 1e-12);
}

#[test]
fn vanilla_gat_matches_dense_oracle() {
    let g = toy_graph();
    let x = toy_features(7, 5, 3);
    let mut cfg = small(Kernel::Gat, Mode::Vanilla);
    cfg.layers = 1;
    let model = Model::new(cfg, 5, 3, 9).unwrap();
    let ctx = GraphContext::new(&g, &x, Kernel::Gat).unwrap();
    let logits = model.predict(&ctx).unwrap();

    let get = |n: &str| model.params.get(n).unwrap().clone();
    let wh = x.matmul(&get("layer1.w")).unwrap();
    let (ad, as_) = (get("layer1.a_dst"), get("layer1.a_src"));
    let score = |i: usize, j: usize| {
        let e: f64 = (0..3).map(|k| ad[(k, 0)] * wh[(i, k)] + as_[(k, 0)] * wh[(j, k)]).sum();
        if e > 0.0 { e } else { 0.2 * e }
    };
    let mut out = Matrix::zeros(7, 3);
    for i in 0..7 {
        let mut nb: Vec<usize> = g.neighbors(i).to_vec();
        nb.push(i);
        let m = nb.iter().map(|&j| score(i, j)).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = nb.iter().map(|&j| (score(i, j) - m).exp()).sum();
        for &j in &nb {
            let w = (score(i, j) - m).exp() / z;
            for k in 0..3 {
                out[(i, k)] += w * wh[(j, k)];
            }
        }
    }
    let oracle = crate::autodiff::log_softmax_rows(&out);
    assert!(logits.max_abs_diff(&oracle) < 1e-12);
}

fn all_configs() -> Vec<ModelConfig> {
    let mut out = Vec::new();
    for &kernel in &[Kernel::Gcn, Kernel::Gin, Kernel::Gat] {
        for &mixer in Mixer::ALL {
            for &norm in Norm::ALL {
                out.push(ModelConfig {
                    mixer,
                    norm,
                    ..small(kernel, Mode::Cagnn)
                });
            }
        }
    }
    for &kernel in Kernel::ALL {
        out.push(small(kernel, Mode::Vanilla));
    }
    out
}

/// Moves zero-initialized biases off the origin, where a zeroed feature row
/// would otherwise sit on the non-differentiable point of row normalization.
fn jittered(params: &[Matrix], seed: u64) -> Vec<Matrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    params
        .iter()
        .map(|m| Matrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)] + rng.random_range(-0.1..0.1)))
        .collect()
}

#[test]
fn gradients_match_finite_differences() {
    let g = toy_graph();
    let x = toy_features(7, 4, 4);
    let labels = [0, 1, 2, 0, 1, 2, 0];
    let mask = [0, 2, 3, 5];
    for (k, cfg) in all_configs().into_iter().enumerate() {
        let model = Model::new(cfg.clone(), 4, 3, k as u64).unwrap();
        let ctx = GraphContext::new(&g, &x, cfg.kernel).unwrap();
        for training in [false, true] {
            let opts = ForwardOptions {
                training,
                seed: 17,
                gate_override: None,
            };
            let check = check_gradients(&jittered(&model.params.values, k as u64), 1e-6, k as u64, |tape, vars| {
                model
                    .forward_with(tape, vars, &ctx, opts)?
                    .logits
                    .masked_cross_entropy(&labels, &mask)
            })
            .unwrap();
            let err = check.max_relative_error();
            assert!(err <= 1e-4, "{cfg:?} training={training}: relative error {err}");
        }
    }
}

#[test]
fn gates_in_open_interval_and_unit_rows() {
    let g = toy_graph();
    let x = toy_features(7, 4, 5);
    for &mixer in Mixer::ALL.iter().filter(|m| m.is_gated()) {
        let cfg = ModelConfig { mixer, ..small(Kernel::Gcn, Mode::Cagnn) };
        let model = Model::new(cfg, 4, 3, 3).unwrap();
        let ctx = GraphContext::new(&g, &x, Kernel::Gcn).unwrap();
        let t = model.trace(&ctx, None).unwrap();
        assert_eq!(t.alphas.len(), 2);
        assert!(t.alphas.iter().flatten().all(|&a| a > 0.0 && a < 1.0));
        for i in 0..7 {
            let n: f64 = t.final_repr.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn global_mixer_starts_at_half() {
    let g = toy_graph();
    let x = toy_features(7, 4, 6);
    let cfg = ModelConfig { mixer: Mixer::Global, ..small(Kernel::Gcn, Mode::Cagnn) };
    let model = Model::new(cfg, 4, 3, 3).unwrap();
    let ctx = GraphContext::new(&g, &x, Kernel::Gcn).unwrap();
    let t = model.trace(&ctx, None).unwrap();
    assert!(t.alphas.iter().flatten().all(|&a| a == 0.5));
}

#[test]
fn degenerate_gates() {
    let g = toy_graph();
    let x = toy_features(7, 4, 7);
    for &kernel in &[Kernel::Gcn, Kernel::Gin, Kernel::Gat] {
        let model = Model::new(small(kernel, Mode::Cagnn), 4, 3, 8).unwrap();
        let ctx = GraphContext::new(&g, &x, kernel).unwrap();
        let get = |n: &str| model.params.get(n).unwrap().clone();
        let h0 = l2_normalize_rows(&add_bias(&x.matmul(&get("enc.w")).unwrap(), &get("enc.b")));

        // α ≡ 0 keeps the encoder output
        let t0 = model.trace(&ctx, Some(0.0)).unwrap();
        assert!(t0.final_repr.max_abs_diff(&h0) <= 1e-10);

        // α ≡ 1 reduces to the normalized convolution stack
        let tape = Tape::new();
        let mut h = tape.constant(h0);
        for l in 1..=2 {
            let vars: Vec<Var<'_>> = model.params.values.iter().map(|m| tape.constant(m.clone())).collect();
            let i = |n: &str| model.params.names.iter().position(|x| x == n).unwrap();
            let z = match kernel {
                Kernel::Gcn => gcn_layer(&tape, &ctx.propagation, Input::Dense(h), vars[i(&format!("gc{l}.w"))]),
                Kernel::Gin => gin_layer(
                    &tape,
                    &ctx.propagation,
                    Input::Dense(h),
                    GinParams {
                        w1: vars[i(&format!("gc{l}.w1"))],
                        b1: vars[i(&format!("gc{l}.b1"))],
                        w2: vars[i(&format!("gc{l}.w2"))],
                        b2: vars[i(&format!("gc{l}.b2"))],
                        eps: vars[i(&format!("gc{l}.eps"))],
                    },
                ),
                _ => gat_layer(
                    &tape,
                    &ctx.propagation,
                    Input::Dense(h),
                    GatParams {
                        w: vars[i(&format!("gc{l}.w"))],
                        a_dst: vars[i(&format!("gc{l}.a_dst"))],
                        a_src: vars[i(&format!("gc{l}.a_src"))],
                    },
                ),
            }
            .unwrap();
            h = z.l2_normalize_rows();
        }
        let t1 = model.trace(&ctx, Some(1.0)).unwrap();
        assert!(t1.final_repr.max_abs_diff(&h.to_matrix()) <= 1e-10, "{kernel}");
    }
}

#[test]
fn gate_override_rejected_for_ungated_mixers() {
    let g = toy_graph();
    let x = toy_features(7, 4, 7);
    let cfg = ModelConfig { mixer: Mixer::Add, ..small(Kernel::Gcn, Mode::Cagnn) };
    let model = Model::new(cfg, 4, 3, 8).unwrap();
    let ctx = GraphContext::new(&g, &x, Kernel::Gcn).unwrap();
    assert!(model.trace(&ctx, Some(0.5)).is_err());
}

#[test]
fn permutation_equivariance() {
    let g = toy_graph();
    let x = toy_features(7, 4, 9);
    let perm = [3, 6, 0, 5, 1, 4, 2];
    let gp = g.permute(&perm).unwrap();
    let xp = Matrix::from_fn(7, 4, |i, j| {
        let old = perm.iter().position(|&p| p == i).unwrap();
        x[(old, j)]
    });
    for cfg in all_configs() {
        let model = Model::new(cfg.clone(), 4, 3, 2).unwrap();
        let a = model.predict(&GraphContext::new(&g, &x, cfg.kernel).unwrap()).unwrap();
        let b = model.predict(&GraphContext::new(&gp, &xp, cfg.kernel).unwrap()).unwrap();
        for (old, &new) in perm.iter().enumerate() {
            for j in 0..3 {
                assert!((a[(old, j)] - b[(new, j)]).abs() < 1e-10, "{cfg:?}");
            }
        }
    }
}

#[test]
fn parameter_layout() {
    let d = 64;
    let m = Model::new(ModelConfig::default(), 10, 3, 0).unwrap();
    assert_eq!(m.mixer_param_count(), 2 * d + 1);
    let cfg = ModelConfig { mixer: Mixer::Unshared, layers: 4, ..ModelConfig::default() };
    assert_eq!(Model::new(cfg, 10, 3, 0).unwrap().mixer_param_count(), 4 * (2 * d + 1));
    let cfg = ModelConfig { mixer: Mixer::Global, layers: 4, ..ModelConfig::default() };
    assert_eq!(Model::new(cfg, 10, 3, 0).unwrap().mixer_param_count(), 4);
    let cfg = ModelConfig { mixer: Mixer::Mlp2, ..ModelConfig::default() };
    assert_eq!(Model::new(cfg, 10, 3, 0).unwrap().mixer_param_count(), 2 * d * 2 * d + 2 * d + 2 * d + 1);
    let cfg = ModelConfig { mixer: Mixer::Concat, layers: 3, ..ModelConfig::default() };
    let m = Model::new(cfg, 10, 3, 0).unwrap();
    assert_eq!(m.params.get("dec.w").unwrap().shape(), (4 * d, 3));
    assert_eq!(m.mixer_param_count(), 0);
}

#[test]
fn concat_normalizes_first_and_last_only() {
    let g = toy_graph();
    let x = toy_features(7, 4, 9);
    let cfg = ModelConfig { mixer: Mixer::Concat, layers: 3, ..small(Kernel::Gcn, Mode::Cagnn) };
    let model = Model::new(cfg, 4, 3, 1).unwrap();
    let ctx = GraphContext::new(&g, &x, Kernel::Gcn).unwrap();
    let t = model.trace(&ctx, None).unwrap();
    assert_eq!(t.final_repr.shape(), (7, 16));
    for i in 0..7 {
        let n: f64 = t.final_repr.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-12);
    }
    let cfg = ModelConfig { mixer: Mixer::Concat, layers: 3, norm: Norm::LayerNorm, ..small(Kernel::Gcn, Mode::Cagnn) };
    let m = Model::new(cfg, 4, 3, 1).unwrap();
    assert!(m.params.get("mix1.norm.gamma").is_some());
    assert!(m.params.get("mix2.norm.gamma").is_none());
    assert_eq!(m.params.get("mix3.norm.gamma").unwrap().shape(), (1, 16));
}

#[test]
fn invalid_configurations() {
    assert!(Model::new(ModelConfig::new(Kernel::Mlp, Mode::Cagnn), 4, 2, 0).is_err());
    assert!(Model::new(ModelConfig { layers: 0, ..ModelConfig::default() }, 4, 2, 0).is_err());
    assert!(Model::new(ModelConfig { gat_heads: 8, ..ModelConfig::default() }, 4, 2, 0).is_err());
    assert!(Model::new(ModelConfig { dropout: 1.0, ..ModelConfig::default() }, 4, 2, 0).is_err());
    assert!("gcnn".parse::<Kernel>().is_err());
    assert_eq!("layernorm".parse::<Norm>().unwrap(), Norm::LayerNorm);
}

#[test]
fn same_seed_same_weights() {
    let a = Model::new(ModelConfig::default(), 6, 2, 42).unwrap();
    let b = Model::new(ModelConfig::default(), 6, 2, 42).unwrap();
    let c = Model::new(ModelConfig::default(), 6, 2, 43).unwrap();
    assert_eq!(a.params, b.params);
    assert_ne!(a.params, c.params);
}

#[test]
fn checkpoint_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("model.json");
    let cfg = ModelConfig { norm: Norm::LayerNorm, mixer: Mixer::Mlp3, ..small(Kernel::Gat, Mode::Cagnn) };
    let model = Model::new(cfg, 4, 3, 5).unwrap();
    save_checkpoint(&model, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back.config, model.config);
    assert_eq!(back.params, model.params);

    let mut ck = model.to_checkpoint();
    ck.params.values[0] = Matrix::zeros(1, 1);
    assert!(Model::from_checkpoint(ck).is_err());
}

#[test]
fn accuracy_counts_hits() {
    let logits = Matrix::from_rows(&[vec![0.1, 0.9], vec![0.8, 0.2], vec![0.3, 0.7]]).unwrap();
    assert_eq!(argmax_rows(&logits), vec![1, 0, 1]);
    assert!((accuracy(&logits, &[1, 1, 1], &[0, 1, 2]) - 200.0 / 3.0).abs() < 1e-12);
}
