mod common;

use common::{random_vec, small_config, Geometry};
use virso_core::autodiff::{grad_check, Tape, Tensor};
use virso_core::graph::{anchor_embeddings, compute_edge_weights, Graph, PointCloud};
use virso_core::model::{
    assemble_node_features, flop_count, Collaboration, GraphContext, Variant, VirsoConfig, VirsoModel,
};
use virso_core::spectral::{dense_eigen_reference, normalized_laplacian, EigenBasis, ModeSelection};

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn set(model: &mut VirsoModel, name: &str, t: Tensor) {
    let id = model.params.find(name).unwrap_or_else(|| panic!("no parameter {name}"));
    assert_eq!(model.params.get(id).shape(), t.shape(), "{name}");
    *model.params.get_mut(id) = t;
}

fn param(model: &VirsoModel, name: &str) -> Tensor {
    model.params.get(model.params.find(name).unwrap()).clone()
}

fn matrix(rows: usize, cols: usize, seed: u64) -> Tensor {
    Tensor::new(&[rows, cols], random_vec(rows * cols, seed)).unwrap()
}

fn dense_ref(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Tensor {
    let mut y = x.matmul(w).unwrap();
    if let Some(b) = b {
        for r in 0..y.rows() {
            for c in 0..y.cols() {
                y.set(r, c, y.get(r, c) + b.get(0, c));
            }
        }
    }
    y
}

fn layer_norm_ref(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for r in 0..x.rows() {
        let row = x.row(r);
        let d = row.len() as f64;
        let mean = row.iter().sum::<f64>() / d;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
        for (o, v) in out.row_mut(r).iter_mut().zip(row) {
            *o = (v - mean) / (var + 1e-12).sqrt();
        }
    }
    out
}

#[test]
fn zero_embedding_weights_give_zero_latent() {
    let mut model = VirsoModel::new(small_config(Variant::Full, 1, 4, 4, 3), 1).unwrap();
    for name in ["embed.0.weight", "embed.0.bias", "embed.1.weight", "embed.1.bias"] {
        let shape = param(&model, name).shape().to_vec();
        set(&mut model, name, Tensor::zeros(&shape));
    }
    for seed in 0..3 {
        assert!(model.embed(&random_vec(7, seed)).unwrap().iter().all(|&a| a == 0.0));
    }
    assert!(model.embed(&[0.0; 6]).is_err());
}

#[test]
fn node_features_concatenate_coordinates_and_embedding() {
    let points = common::random_cloud(4, 2, 5);
    let a = [0.25, -1.0, 3.0];
    let x = assemble_node_features(&points, &a);
    assert_eq!(x.shape(), &[4, 5]);
    for i in 0..4 {
        let mut want = points.point(i).to_vec();
        want.extend_from_slice(&a);
        assert_eq!(x.row(i), want.as_slice());
    }
}

fn spectral_setup(seed: u64) -> (Geometry, VirsoModel, Tensor) {
    let geo = Geometry::random(30, 5, 6, 4, seed);
    let model = VirsoModel::new(small_config(Variant::SpectralOnly, 1, 5, 6, 4), seed).unwrap();
    let v = matrix(30, 5, seed + 100);
    (geo, model, v)
}

fn run_spectral(model: &VirsoModel, ctx: &GraphContext, v: &Tensor) -> Tensor {
    let mut tape = Tape::new();
    let p = model.params.bind(&mut tape);
    let tc = model.prepare(&mut tape, &p, ctx).unwrap();
    let v = tape.constant(v.clone());
    let out = model.spectral_block(&mut tape, &p, 0, v, &tc).unwrap();
    tape.value(out).clone()
}

#[test]
fn spectral_block_kernel_off_is_normalized_activation() {
    let (geo, mut model, v) = spectral_setup(3);
    set(&mut model, "block0.kernel", Tensor::zeros(&[6, 5, 5]));
    set(&mut model, "block0.skip.weight", Tensor::identity(5));
    set(&mut model, "block0.skip.bias", Tensor::zeros(&[1, 5]));
    let got = run_spectral(&model, &geo.context(), &v);
    let want = layer_norm_ref(&v.map(gelu));
    assert!(got.max_abs_diff(&want) < 1e-12);
}

#[test]
fn spectral_block_annihilates_signals_outside_the_span() {
    let (geo, mut model, v) = spectral_setup(4);
    // project v onto the orthogonal complement of span(Q)
    let coeff = geo.basis.gft(&v).unwrap();
    let back = geo.basis.igft(&coeff).unwrap();
    let mut v_perp = v.clone();
    for (o, b) in v_perp.data_mut().iter_mut().zip(back.data()) {
        *o -= b;
    }
    set(&mut model, "block0.skip.weight", Tensor::zeros(&[5, 5]));
    set(&mut model, "block0.skip.bias", Tensor::zeros(&[1, 5]));
    let got = run_spectral(&model, &geo.context(), &v_perp);
    assert!(got.data().iter().all(|x| x.abs() < 1e-9), "{:?}", &got.data()[..5]);
}

#[test]
fn spectral_block_matches_dense_reimplementation() {
    let (geo, mut model, v) = spectral_setup(5);
    set(&mut model, "block0.norm.gain", matrix(1, 5, 7));
    set(&mut model, "block0.norm.bias", matrix(1, 5, 8));
    let got = run_spectral(&model, &geo.context(), &v);

    let (n, m, d) = (30, 6, 5);
    let q = &geo.basis.q;
    let k = param(&model, "block0.kernel");
    let mut c = vec![vec![0.0; d]; m];
    for j in 0..m {
        for a in 0..d {
            c[j][a] = (0..n).map(|i| q.get(i, j) * v.get(i, a)).sum();
        }
    }
    let mut mixed = vec![vec![0.0; d]; m];
    for j in 0..m {
        for b in 0..d {
            mixed[j][b] = (0..d).map(|a| c[j][a] * k.data()[j * d * d + a * d + b]).sum();
        }
    }
    let skip = dense_ref(&v, &param(&model, "block0.skip.weight"), Some(&param(&model, "block0.skip.bias")));
    let mut pre = Tensor::zeros(&[n, d]);
    for i in 0..n {
        for b in 0..d {
            let spec: f64 = (0..m).map(|j| q.get(i, j) * mixed[j][b]).sum();
            pre.set(i, b, gelu(spec + skip.get(i, b)));
        }
    }
    let mut want = layer_norm_ref(&pre);
    let (g, bias) = (param(&model, "block0.norm.gain"), param(&model, "block0.norm.bias"));
    for i in 0..n {
        for b in 0..d {
            want.set(i, b, want.get(i, b) * g.get(0, b) + bias.get(0, b));
        }
    }
    assert!(got.max_abs_diff(&want) < 1e-12, "{}", got.max_abs_diff(&want));
}

#[test]
fn spectral_block_rejects_wrong_mode_count() {
    let (geo, model, _) = spectral_setup(6);
    let l = normalized_laplacian(&geo.graph, false).unwrap();
    let basis = dense_eigen_reference(&l, 4).unwrap();
    let ctx = geo.context().with_basis(Some(&basis));
    let mut tape = Tape::new();
    let p = model.params.bind(&mut tape);
    assert!(model.prepare(&mut tape, &p, &ctx).is_err());
}

fn run_spatial(model: &VirsoModel, ctx: &GraphContext, v: &Tensor, gates: Option<Tensor>) -> Tensor {
    let mut tape = Tape::new();
    let p = model.params.bind(&mut tape);
    let tc = model.prepare(&mut tape, &p, ctx).unwrap();
    let v = tape.constant(v.clone());
    let g = match gates {
        Some(g) => tape.constant(g),
        None => tc_gate(&tc),
    };
    let out = model.spatial_block(&mut tape, &p, 0, v, g, ctx).unwrap();
    tape.value(out).clone()
}

fn tc_gate(tc: &virso_core::model::TapeContext) -> virso_core::autodiff::Value {
    tc.gate(0).expect("spatial variant has gates")
}

#[test]
fn spatial_block_with_closed_gates_is_zero() {
    let geo = Geometry::random(20, 4, 4, 3, 9);
    let model = VirsoModel::new(small_config(Variant::SpatialOnly, 1, 4, 4, 3), 9).unwrap();
    let e = geo.graph.directed_edge_count();
    let got = run_spatial(&model, &geo.context(), &matrix(20, 4, 10), Some(Tensor::zeros(&[e, 1])));
    assert!(got.data().iter().all(|&x| x == 0.0));
}

#[test]
fn spatial_block_single_neighbor_is_normalized_feature() {
    let points = PointCloud::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
    let graph = compute_edge_weights(&Graph::from_directed(2, [(0, 1)]).unwrap(), &points).unwrap();
    let anchors = anchor_embeddings(&graph, 1, 0).unwrap();
    let ctx = GraphContext::new(&points, &graph, None, Some(&anchors)).unwrap();
    let mut model = VirsoModel::new(small_config(Variant::SpatialOnly, 1, 3, 1, 1), 0).unwrap();
    set(&mut model, "block0.spatial.weight", Tensor::identity(3));
    let v = Tensor::from_rows(&[vec![3.0, 0.0, 4.0], vec![1.0, 2.0, 2.0]]);
    let got = run_spatial(&model, &ctx, &v, Some(Tensor::filled(&[2, 1], 1.0)));
    let want = Tensor::from_rows(&[vec![1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0], vec![0.6, 0.0, 0.8]]);
    assert!(got.max_abs_diff(&want) < 1e-15);
}

#[test]
fn spatial_block_matches_per_edge_loop() {
    let geo = Geometry::random(6, 2, 2, 2, 11);
    let ctx = geo.context();
    let model = VirsoModel::new(small_config(Variant::SpatialOnly, 1, 4, 2, 2), 11).unwrap();
    let v = matrix(6, 4, 12);
    let got = run_spatial(&model, &ctx, &v, None);

    let h = &geo.anchors.h;
    let w = geo.graph.weights().unwrap();
    let pm = |name: &str| param(&model, &format!("block0.gate.{name}"));
    let (w1d, w1s, w1e, b1, w2, b2, w3, b3) =
        (pm("w1_dst"), pm("w1_src"), pm("w1_edge"), pm("b1"), pm("w2"), pm("b2"), pm("w3"), pm("b3"));
    let vw = v.matmul(&param(&model, "block0.spatial.weight")).unwrap();
    let mut agg = Tensor::zeros(&[6, 4]);
    for (k, &(dst, src)) in geo.graph.edges().iter().enumerate() {
        // input to W1 is [h_v, h_u, W2 w + b2]
        let mut feat: Vec<f64> = h.row(dst).to_vec();
        feat.extend_from_slice(h.row(src));
        feat.extend((0..3).map(|j| w2.get(0, j) * w[k] + b2.get(0, j)));
        let mut logit = b3.get(0, 0);
        for o in 0..5 {
            let mut z = b1.get(0, o);
            for (i, f) in feat.iter().enumerate() {
                let wt = match i {
                    0..=1 => w1d.get(i, o),
                    2..=3 => w1s.get(i - 2, o),
                    _ => w1e.get(i - 4, o),
                };
                z += f * wt;
            }
            logit += z.max(0.0) * w3.get(o, 0);
        }
        let gamma = 1.0 / (1.0 + (-logit).exp());
        for c in 0..4 {
            agg.set(dst, c, agg.get(dst, c) + gamma * vw.get(src, c));
        }
    }
    for r in 0..6 {
        let norm = agg.row(r).iter().map(|x| x * x).sum::<f64>().sqrt();
        agg.row_mut(r).iter_mut().for_each(|x| *x /= norm);
    }
    assert!(got.max_abs_diff(&agg) < 1e-12, "{}", got.max_abs_diff(&agg));
}

#[test]
fn spatial_branch_requires_edge_weights() {
    let geo = Geometry::random(20, 4, 4, 3, 13);
    let bare = Graph::from_directed(20, geo.graph.edges().iter().copied()).unwrap();
    let ctx = GraphContext::new(&geo.points, &bare, Some(&geo.basis), Some(&geo.anchors)).unwrap();
    let model = VirsoModel::new(small_config(Variant::Full, 1, 4, 4, 3), 0).unwrap();
    assert!(model.forward(&ctx, &[0.0; 7]).is_err());
}

fn run_collab(model: &VirsoModel, spat: &Tensor, spec: &Tensor, v: &Tensor) -> Tensor {
    let mut tape = Tape::new();
    let p = model.params.bind(&mut tape);
    let (a, b, v) = (tape.constant(spat.clone()), tape.constant(spec.clone()), tape.constant(v.clone()));
    let out = model.collaboration(&mut tape, &p, 0, Some(a), Some(b), v).unwrap();
    tape.value(out).clone()
}

#[test]
fn collaboration_zero_map_is_pure_skip() {
    let mut model = VirsoModel::new(small_config(Variant::Full, 1, 4, 4, 3), 2).unwrap();
    set(&mut model, "block0.collab.0.weight", Tensor::zeros(&[8, 4]));
    set(&mut model, "block0.collab.0.bias", Tensor::zeros(&[1, 4]));
    let v = matrix(5, 4, 1);
    assert_eq!(run_collab(&model, &matrix(5, 4, 2), &matrix(5, 4, 3), &v), v);
}

#[test]
fn collaboration_selection_without_skip() {
    let mut cfg = small_config(Variant::Full, 1, 4, 4, 3);
    cfg.use_identity_skip = false;
    let mut model = VirsoModel::new(cfg, 2).unwrap();
    let mut sel = Tensor::zeros(&[8, 4]);
    for i in 0..4 {
        sel.set(i, i, 1.0);
    }
    set(&mut model, "block0.collab.0.weight", sel);
    set(&mut model, "block0.collab.0.bias", Tensor::zeros(&[1, 4]));
    let spat = matrix(5, 4, 2);
    assert_eq!(run_collab(&model, &spat, &matrix(5, 4, 3), &matrix(5, 4, 1)), spat);
}

#[test]
fn nonlinear_collaboration_matches_composition() {
    let mut cfg = small_config(Variant::Full, 1, 4, 4, 3);
    cfg.collaboration = Collaboration::Nonlinear;
    let model = VirsoModel::new(cfg, 21).unwrap();
    let (spat, spec, v) = (matrix(5, 4, 2), matrix(5, 4, 3), matrix(5, 4, 1));
    let got = run_collab(&model, &spat, &spec, &v);
    let mut cat = Tensor::zeros(&[5, 8]);
    for r in 0..5 {
        let row: Vec<f64> = spat.row(r).iter().chain(spec.row(r)).copied().collect();
        cat.row_mut(r).copy_from_slice(&row);
    }
    let h = dense_ref(&cat, &param(&model, "block0.collab.0.weight"), Some(&param(&model, "block0.collab.0.bias")));
    let mut want = dense_ref(&h.map(gelu), &param(&model, "block0.collab.1.weight"), Some(&param(&model, "block0.collab.1.bias")));
    for (o, x) in want.data_mut().iter_mut().zip(v.data()) {
        *o += x;
    }
    assert!(got.max_abs_diff(&want) < 1e-13);
}

fn mlp_path(model: &VirsoModel, geo: &Geometry, u: &[f64]) -> Tensor {
    let a = model.embed(u).unwrap();
    let x = assemble_node_features(&geo.points, &a);
    let v = dense_ref(&x, &param(model, "lift.weight"), Some(&param(model, "lift.bias")));
    let h = dense_ref(&v, &param(model, "head.0.weight"), Some(&param(model, "head.0.bias"))).map(gelu);
    dense_ref(&h, &param(model, "head.1.weight"), Some(&param(model, "head.1.bias")))
}

#[test]
fn zero_blocks_is_the_mlp_path() {
    let geo = Geometry::random(25, 4, 4, 3, 17);
    let cfg = small_config(Variant::Full, 0, 4, 4, 3);
    assert!(VirsoModel::new(cfg.clone(), 0).is_err());
    let model = VirsoModel::new_unchecked_blocks(cfg, 0).unwrap();
    let u = random_vec(7, 3);
    let got = model.forward(&geo.context(), &u).unwrap();
    assert!(got.max_abs_diff(&mlp_path(&model, &geo, &u)) < 1e-13);
}

#[test]
fn zeroed_blocks_reduce_to_skip_path() {
    let geo = Geometry::random(25, 4, 4, 3, 19);
    for variant in [Variant::Full, Variant::SpectralOnly, Variant::SpatialOnly] {
        let mut model = VirsoModel::new(small_config(variant, 2, 4, 4, 3), 1).unwrap();
        model.zero_block_params();
        let u = random_vec(7, 4);
        let got = model.forward(&geo.context(), &u).unwrap();
        assert_eq!(got, mlp_path(&model, &geo, &u), "{variant}");
    }
}

#[test]
fn block_errors_carry_block_index() {
    let geo = Geometry::random(25, 4, 4, 3, 19);
    let model = VirsoModel::new(small_config(Variant::Full, 2, 4, 4, 3), 1).unwrap();
    let mut tape = Tape::new();
    let p = model.params.bind(&mut tape);
    let ctx = geo.context();
    let mut tc = model.prepare(&mut tape, &p, &ctx).unwrap();
    tc.override_gate(1, tape.constant(Tensor::zeros(&[3, 1])));
    let err = model.forward_on_tape(&mut tape, &p, &ctx, &tc, &[0.0; 7]).unwrap_err();
    assert!(matches!(err, virso_core::Error::InBlock { block: 1, .. }), "{err}");
}

#[test]
fn gradients_match_finite_differences() {
    let geo = Geometry::random(50, 6, 8, 4, 23);
    let ctx = geo.context();
    let model = VirsoModel::new(small_config(Variant::Full, 2, 8, 8, 4), 23).unwrap();
    let u = random_vec(7, 5);
    let target = Tensor::new(&[50, 3], random_vec(150, 6)).unwrap();
    let report = grad_check(&model.params, 30, 1e-4, 99, |store| {
        let mut m = model.clone();
        m.params = store.clone();
        let mut tape = Tape::new();
        let p = m.params.bind(&mut tape);
        let tc = m.prepare(&mut tape, &p, &ctx)?;
        let out = m.forward_on_tape(&mut tape, &p, &ctx, &tc, &u)?;
        let t = tape.constant(target.clone());
        let diff = tape.sub(out, t)?;
        let sq = tape.col_sum_squares(diff)?;
        let sq = tape.sum(sq);
        let loss = tape.sqrt(sq);
        tape.backward(loss)?;
        Ok((tape.value(loss).data()[0], p.grads(&tape)))
    })
    .unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn spectral_only_ignores_edge_weights() {
    let geo = Geometry::random(40, 5, 6, 3, 29);
    let model = VirsoModel::new(small_config(Variant::SpectralOnly, 2, 4, 6, 3), 2).unwrap();
    let u = random_vec(7, 1);
    let base = model.forward(&geo.context(), &u).unwrap();
    let w: Vec<f64> = random_vec(geo.graph.directed_edge_count(), 3).iter().map(|x| 0.5 + 0.4 * x).collect();
    let ctx = geo.context().with_edge_weights(&w).unwrap();
    assert_eq!(model.forward(&ctx, &u).unwrap(), base);
}

#[test]
fn spatial_only_never_reads_the_basis() {
    let geo = Geometry::random(40, 5, 6, 3, 31);
    let model = VirsoModel::new(small_config(Variant::SpatialOnly, 2, 4, 6, 3), 2).unwrap();
    let u = random_vec(7, 1);
    let base = model.forward(&geo.context(), &u).unwrap();
    assert_eq!(model.forward(&geo.context().with_basis(None), &u).unwrap(), base);
    let other = EigenBasis::new(Tensor::zeros(&[40, 6]), vec![0.0; 6], ModeSelection::Smallest);
    if let Ok(b) = other {
        assert_eq!(model.forward(&geo.context().with_basis(Some(&b)), &u).unwrap(), base);
    }
}

#[test]
fn permuting_nodes_permutes_output_rows() {
    let geo = Geometry::random(40, 5, 6, 3, 37);

    // old node i becomes node perm[i]
    let perm: Vec<usize> = (0..40).map(|i| (i * 17 + 3) % 40).collect();
    let points = geo.points.permuted(&perm).unwrap();
    let graph = geo.graph.permuted(&perm);
    let basis = dense_eigen_reference(&normalized_laplacian(&graph, false).unwrap(), 6).unwrap();
    let ids: Vec<usize> = geo.anchors.anchor_ids.iter().map(|&a| perm[a]).collect();
    let anchors = virso_core::graph::anchor_embeddings_from(&graph, &ids).unwrap();
    let ctx = GraphContext::new(&points, &graph, Some(&basis), Some(&anchors)).unwrap();
    for variant in [Variant::SpectralOnly, Variant::SpatialOnly, Variant::Full] {
        let model = VirsoModel::new(small_config(variant, 2, 4, 6, 3), 5).unwrap();
        let u = random_vec(7, 2);
        let base = model.forward(&geo.context(), &u).unwrap();
        let got = model.forward(&ctx, &u).unwrap();
        let diff = got.select_rows(&perm).max_abs_diff(&base);
        assert!(diff < 1e-8, "{variant}: {diff}");
    }
}

fn enumerate_count(cfg: &VirsoConfig) -> usize {
    let model = VirsoModel::new(cfg.clone(), 0).unwrap();
    model.params.iter().map(|(_, _, t)| t.len()).sum()
}

#[test]
fn parameter_formula_matches_allocation() {
    for variant in [Variant::Full, Variant::SpectralOnly, Variant::SpatialOnly] {
        for collab in [Collaboration::Linear, Collaboration::Nonlinear] {
            for skip in [true, false] {
                let mut cfg = small_config(variant, 3, 5, 4, 3);
                cfg.collaboration = collab;
                cfg.use_spectral_weighted_skip = skip;
                assert_eq!(cfg.parameter_count(), enumerate_count(&cfg), "{variant} {collab:?} {skip}");
            }
        }
    }
    let cfg = VirsoConfig::heat_exchanger(10);
    assert_eq!(cfg.parameter_count(), enumerate_count(&cfg));
}

#[test]
fn heat_exchanger_parameter_counts() {
    for (blocks, published) in [(10, 1.66e6), (14, 2.31e6)] {
        let count = VirsoConfig::heat_exchanger(blocks).parameter_count() as f64;
        let rel = (count - published).abs() / published;
        assert!(rel < 0.05, "{blocks} blocks: {count} vs {published}");
    }
}

#[test]
fn flop_count_structure() {
    let cfg = small_config(Variant::Full, 0, 4, 4, 3);
    let f = flop_count(&cfg, 100, 600);
    assert_eq!(f.total, f.embed + f.lift + f.head);
    let cfg = small_config(Variant::Full, 3, 4, 4, 3);
    let (a, b) = (flop_count(&cfg, 100, 600), flop_count(&cfg, 100, 1200));
    assert_eq!(b.spatial_per_block, 2.0 * a.spatial_per_block);
    assert_eq!(a.spectral_per_block, b.spectral_per_block);
    assert_eq!(b.total - a.total, 3.0 * a.spatial_per_block);
    assert!(!a.formula.is_empty());
}

#[test]
fn heat_exchanger_flops_same_order_as_published() {
    let points = common::random_cloud(3977, 2, 41);
    let graph = virso_core::graph::build_knn(&points, 30).unwrap();
    let f = flop_count(&VirsoConfig::heat_exchanger(10), 3977, graph.directed_edge_count());
    let ratio = f.total / 2.04e9;
    assert!((1.0 / 3.0..3.0).contains(&ratio), "{} FLOPs", f.total);
}

#[test]
fn config_rejects_unknown_keys() {
    let mut v = serde_json::to_value(VirsoConfig::heat_exchanger(10)).unwrap();
    let back: VirsoConfig = serde_json::from_value(v.clone()).unwrap();
    assert_eq!(back, VirsoConfig::heat_exchanger(10));
    v["surprise"] = serde_json::json!(1);
    assert!(serde_json::from_value::<VirsoConfig>(v).is_err());
}
