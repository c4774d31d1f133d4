use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;
use virso_core::autodiff::Tensor;
use virso_core::bench::{self, BenchReport, TelemetryTrace};
use virso_core::graph::{anchor_embeddings, build_knn, build_radius, build_vknn, compute_edge_weights, PointCloud};
use virso_core::io;
use virso_core::model::{flop_count, VirsoModel};
use virso_core::normalize::Normalizer;
use virso_core::spectral::{dense_eigen_select, lobpcg, normalized_laplacian, LobpcgOptions, DENSE_LIMIT};
use virso_core::synth::generate_dataset;
use virso_core::train::{self, split_dataset, Split, TrainOutcome};

use crate::config::{AblationVariant, GraphMethod, RunConfig, Solver};
use crate::workspace::{sha256_hex, AnchorManifest, Workspace};
use crate::CliError;

fn to_runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

pub fn gen_data(ws: &Workspace) -> Result<(), CliError> {
    let cfg = &ws.cfg;
    let dir = ws.root().join("data");
    ws.prepare_dir(&dir, cfg)?;
    let start = Instant::now();
    let out = generate_dataset(&cfg.synth)?;
    let split = split_dataset(out.dataset.len(), cfg.split, cfg.seed)?;
    let prov = ws.provenance(cfg, "gen-data");
    io::write_point_cloud(&ws.points_path(), &out.points, prov.clone())?;
    io::write_dataset(&ws.dataset_path(), &out.dataset, out.points.dim(), Some(&split), Some("points.json"), prov)?;
    ws.write_json(&dir.join("field_params.json"), &out.params)?;

    let mut hashes = serde_json::Map::new();
    let mut names: Vec<PathBuf> = fs::read_dir(&dir)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    names.sort();
    for p in names.iter().filter(|p| p.extension().is_some_and(|x| x == "bin")) {
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        hashes.insert(name, json!(sha256_hex(&fs::read(p)?)));
    }
    ws.write_summary(
        &dir,
        cfg,
        "gen-data",
        json!({
            "nodes": out.points.len(),
            "samples": out.dataset.len(),
            "input_width": out.dataset.q,
            "channels": out.dataset.channels,
            "split": [split.train.len(), split.val.len(), split.test.len()],
            "reconstruction_ratio": out.reconstruction_ratio(),
            "sha256": hashes,
            "seconds": start.elapsed().as_secs_f64(),
        }),
    )
}

pub fn prep_graph(ws: &Workspace, method: GraphMethod) -> Result<PathBuf, CliError> {
    let mut cfg = ws.cfg.clone();
    cfg.graph.method = method;
    let (data, points) = ws.load_dataset()?;
    let dir = ws.graph_dir(method);
    ws.prepare_dir(&dir, &cfg)?;
    let start = Instant::now();
    let (graph, pre) = build_graph(&cfg, &points)?;
    let graph = compute_edge_weights(&graph, &points)?;
    let post = graph.degree_stats();
    if post.isolated > 0 {
        log::warn!("{} isolated nodes in the {} graph", post.isolated, method.name());
    }
    let hash = graph.content_hash();

    let lap = normalized_laplacian(&graph, cfg.spectral.weighted)?;
    let n = points.len();
    let sp = &cfg.spectral;
    let use_dense = match sp.solver {
        Solver::Auto => n <= DENSE_LIMIT,
        Solver::Dense => true,
        Solver::Lobpcg => false,
    };
    let (basis, solver) = if use_dense {
        (dense_eigen_select(&lap, sp.modes, sp.selection)?, json!({"solver": "dense"}))
    } else {
        let opts = LobpcgOptions { tol: sp.tol, max_iter: sp.max_iter, seed: cfg.seed, selection: sp.selection, ..Default::default() };
        let r = lobpcg(&lap, sp.modes, &opts)?;
        let worst = r.residuals.iter().cloned().fold(0.0, f64::max);
        (r.basis, json!({"solver": "lobpcg", "iterations": r.iterations, "max_residual": worst}))
    };

    let model = cfg.model_config(n, data.dataset.q, data.dataset.channels, data.d)?;
    let anchors = anchor_embeddings(&graph, model.alpha_anchors, cfg.seed)?;

    let prov = ws.provenance(&cfg, "prep-graph");
    io::write_graph(&dir.join("graph.json"), &graph, prov.clone())?;
    io::write_basis(&dir.join("basis.json"), &basis, &hash, prov.clone())?;
    let manifest = AnchorManifest { kind: "anchors".into(), graph_hash: hash.clone(), seed: anchors.seed, ids: anchors.anchor_ids.clone(), provenance: prov };
    ws.write_json(&dir.join("anchors.json"), &manifest)?;
    ws.write_summary(
        &dir,
        &cfg,
        "prep-graph",
        json!({
            "method": method.name(),
            "graph_hash": hash,
            "nodes": n,
            "undirected_edges": post.edge_count,
            "pre_symmetrization_degree": pre,
            "degrees": post,
            "eigen": solver,
            "eigenvalues": basis.sigma,
            "anchors": anchors.anchor_ids,
            "seconds": start.elapsed().as_secs_f64(),
        }),
    )?;
    Ok(dir)
}

fn build_graph(cfg: &RunConfig, points: &PointCloud) -> Result<(virso_core::graph::Graph, serde_json::Value), CliError> {
    let g = &cfg.graph;
    Ok(match g.method {
        GraphMethod::Knn => (build_knn(points, g.knn.k)?, json!({"min": g.knn.k, "max": g.knn.k})),
        GraphMethod::Radius => (build_radius(points, g.radius.r)?, serde_json::Value::Null),
        GraphMethod::Vknn => {
            let v = build_vknn(points, &g.vknn)?;
            let pre = json!({"min": v.pre_symmetrization_min, "max": v.pre_symmetrization_max, "d_max": v.d_max});
            (v.graph, pre)
        }
    })
}

#[derive(Serialize)]
struct TrainSummary {
    variant: String,
    graph: String,
    parameters: usize,
    best_epoch: Option<usize>,
    best_val_loss: f64,
    epochs_run: usize,
    stop: String,
    test_mean_percent: Option<f64>,
    test_per_channel_percent: Option<Vec<f64>>,
    wall_time_s: f64,
}

/// Trains `cfg` into `dir`: checkpoint, report and loss curve.
fn train_into(ws: &Workspace, cfg: &RunConfig, dir: &Path, command: &str) -> Result<(TrainOutcome, TrainSummary), CliError> {
    let (data, points) = ws.load_dataset()?;
    let split = data
        .split
        .clone()
        .ok_or_else(|| CliError::Validation(format!("{} has no split; rerun gen-data", ws.dataset_path().display())))?;
    let method = cfg.graph.method;
    let geo = ws.load_geometry(method)?;
    let model_cfg = cfg.model_config(points.len(), data.dataset.q, data.dataset.channels, data.d)?;
    let ctx = ws.context(&points, &geo, &model_cfg, method)?;
    ws.prepare_dir(dir, cfg)?;
    let model = VirsoModel::new(model_cfg, cfg.seed)?;
    let parameters = model.parameter_count();
    log::info!("training {} ({} parameters) on {}", cfg.model.variant, parameters, method.name());
    let outcome = train::train(model, &ctx, &data.dataset, &split, &cfg.train, &geo.graph.content_hash())?;
    let prov = ws.provenance(cfg, command);
    io::write_checkpoint(&dir.join("checkpoint.json"), &outcome.checkpoint, prov)?;
    ws.write_json(&dir.join("train_report.json"), &outcome.report)?;
    fs::write(dir.join("loss_curve.csv"), outcome.report.curves_csv())?;
    let r = &outcome.report;
    let summary = TrainSummary {
        variant: cfg.model.variant.to_string(),
        graph: method.name().into(),
        parameters,
        best_epoch: r.best_epoch,
        best_val_loss: r.best_val_loss,
        epochs_run: r.epochs.len(),
        stop: format!("{:?}", r.stop),
        test_mean_percent: r.test.as_ref().map(|t| 100.0 * t.mean),
        test_per_channel_percent: r.test.as_ref().map(|t| t.per_channel_mean.iter().map(|e| 100.0 * e).collect()),
        wall_time_s: r.wall_time_s,
    };
    Ok((outcome, summary))
}

pub fn train(ws: &Workspace) -> Result<(), CliError> {
    let dir = ws.root().join("train").join(Workspace::tag(&ws.cfg));
    let (_, summary) = train_into(ws, &ws.cfg, &dir, "train")?;
    ws.write_summary(&dir, &ws.cfg, "train", serde_json::to_value(&summary).map_err(to_runtime)?)
}

fn split_indices(split: &Split, name: &str, count: usize) -> Result<Vec<usize>, CliError> {
    Ok(match name {
        "train" => split.train.clone(),
        "val" => split.val.clone(),
        "test" => split.test.clone(),
        "all" => (0..count).collect(),
        other => return Err(CliError::Validation(format!("unknown split `{other}` (train, val, test, all)"))),
    })
}

fn load_checkpoint(ws: &Workspace) -> Result<(PathBuf, virso_core::model::Checkpoint), CliError> {
    let path = ws.root().join("train").join(Workspace::tag(&ws.cfg)).join("checkpoint.json");
    Workspace::require(&path, &format!("train --variant ... --graph {}", ws.cfg.graph.method.name()))?;
    let ckpt = io::read_checkpoint(&path)?;
    Ok((path, ckpt))
}

pub fn eval(ws: &Workspace, split_name: &str) -> Result<(), CliError> {
    let cfg = &ws.cfg;
    let (ckpt_path, ckpt) = load_checkpoint(ws)?;
    let (data, points) = ws.load_dataset()?;
    let split = data.split.clone().ok_or_else(|| CliError::Validation("dataset has no split".into()))?;
    let idx = split_indices(&split, split_name, data.dataset.len())?;
    let method = cfg.graph.method;
    let geo = ws.load_geometry(method)?;
    if geo.graph.content_hash() != ckpt.graph_hash {
        return Err(CliError::Validation(format!(
            "{} was trained on graph {} but the prepared {} graph is {}",
            ckpt_path.display(),
            ckpt.graph_hash,
            method.name(),
            geo.graph.content_hash()
        )));
    }
    let ctx = ws.context(&points, &geo, &ckpt.model.config, method)?;
    let report = train::evaluate(&ckpt, &ctx, &data.dataset, &idx, ws.threads > 1)?;
    let dir = ws.root().join("eval").join(Workspace::tag(cfg));
    ws.prepare_dir(&dir, cfg)?;
    ws.write_json(&dir.join(format!("eval_{split_name}.json")), &report)?;
    ws.write_summary(
        &dir,
        cfg,
        "eval",
        json!({
            "checkpoint": ckpt_path,
            "split": split_name,
            "samples": report.count,
            "mean_percent": 100.0 * report.mean,
            "per_channel_percent": report.per_channel_mean.iter().map(|e| 100.0 * e).collect::<Vec<_>>(),
            "percentiles": report.percentiles,
        }),
    )
}

pub fn ablate(ws: &Workspace) -> Result<(), CliError> {
    let root = ws.root().join("ablate");
    ws.prepare_dir(&root, &ws.cfg)?;
    let mut rows = Vec::new();
    for &method in &ws.cfg.ablate.graphs {
        if ws.load_geometry(method).is_err() {
            log::info!("preparing {} graph for the ablation", method.name());
            prep_graph(ws, method)?;
        }
        for &variant in &ws.cfg.ablate.variants {
            let mut cfg = ws.cfg.clone();
            cfg.graph.method = method;
            variant.apply(&mut cfg.model);
            let dir = root.join(format!("{}-{}", variant.name(), method.name()));
            let (_, mut summary) = train_into(ws, &cfg, &dir, "ablate")?;
            summary.variant = variant.name().into();
            ws.write_summary(&dir, &cfg, "ablate", serde_json::to_value(&summary).map_err(to_runtime)?)?;
            rows.push(summary);
        }
    }

    let mut w = String::from("variant,graph,parameters,best_epoch,test_mean_percent");
    let channels = rows.iter().find_map(|r| r.test_per_channel_percent.as_ref().map(Vec::len)).unwrap_or(0);
    for c in 0..channels {
        w.push_str(&format!(",channel{c}_percent"));
    }
    w.push('\n');
    for r in &rows {
        let fmt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.4}"));
        w.push_str(&format!(
            "{},{},{},{},{}",
            r.variant,
            r.graph,
            r.parameters,
            r.best_epoch.map_or(String::new(), |e| e.to_string()),
            fmt(r.test_mean_percent)
        ));
        for c in 0..channels {
            w.push(',');
            w.push_str(&fmt(r.test_per_channel_percent.as_ref().and_then(|v| v.get(c).copied())));
        }
        w.push('\n');
    }
    fs::write(root.join("table.csv"), &w)?;
    ws.write_json(&root.join("table.json"), &rows)?;

    let err = |v: AblationVariant, g: GraphMethod| {
        rows.iter().find(|r| r.variant == v.name() && r.graph == g.name()).and_then(|r| r.test_mean_percent)
    };
    let mut orderings = Vec::new();
    for &g in &ws.cfg.ablate.graphs {
        let spec = err(AblationVariant::SpectralOnly, g);
        if let (Some(a), Some(b)) = (spec, err(AblationVariant::SpatialOnly, g)) {
            orderings.push(json!({"graph": g.name(), "check": "spectral_only < spatial_only", "holds": a < b}));
        }
        if let (Some(a), Some(b)) = (spec, err(AblationVariant::NoSkip, g)) {
            orderings.push(json!({"graph": g.name(), "check": "spectral_only < no_skip", "holds": a < b}));
        }
    }
    print!("{w}");
    ws.write_summary(&root, &ws.cfg, "ablate", json!({"rows": rows, "orderings": orderings}))
}

pub fn gradcheck(ws: &Workspace) -> Result<(), CliError> {
    let cfg = &ws.cfg;
    let gc = &cfg.gradcheck;
    let (data, points) = ws.load_dataset()?;
    let method = cfg.graph.method;
    let geo = ws.load_geometry(method)?;
    let model_cfg = cfg.model_config(points.len(), data.dataset.q, data.dataset.channels, data.d)?;
    let ctx = ws.context(&points, &geo, &model_cfg, method)?;
    let sample = data
        .dataset
        .samples
        .get(gc.sample)
        .ok_or_else(|| CliError::Validation(format!("gradcheck.sample {} out of range", gc.sample)))?;
    let c = data.dataset.channels;
    // unit-scale inputs and targets so the probe step is meaningful
    let in_norm = Normalizer::fit(cfg.train.input_normalization, &sample.u_q, 1)?;
    let out_norm = Normalizer::fit(cfg.train.target_normalization, sample.s.data(), c)?;
    let u = in_norm.apply(&sample.u_q)?;
    let target = Tensor::new(&[points.len(), c], out_norm.apply(sample.s.data())?)?;
    let model = VirsoModel::new(model_cfg, cfg.seed)?;
    let start = Instant::now();
    let report = model.check_gradients(&ctx, &u, &target, gc.probes, gc.step, cfg.seed)?;
    let dir = ws.root().join("gradcheck").join(Workspace::tag(cfg));
    ws.prepare_dir(&dir, cfg)?;
    ws.write_json(&dir.join("gradcheck.json"), &report)?;
    let pass = report.max_rel_error < gc.tolerance;
    ws.write_summary(
        &dir,
        cfg,
        "gradcheck",
        json!({
            "probes": report.probes.len(),
            "max_rel_error": report.max_rel_error,
            "tolerance": gc.tolerance,
            "pass": pass,
            "seconds": start.elapsed().as_secs_f64(),
        }),
    )?;
    println!("max relative error {:.3e} over {} probes", report.max_rel_error, report.probes.len());
    if pass {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("gradient check failed: {:.3e} >= {:.1e}", report.max_rel_error, gc.tolerance)))
    }
}

pub fn bench(ws: &Workspace) -> Result<(), CliError> {
    let cfg = &ws.cfg;
    let b = &cfg.bench;
    let (ckpt_path, ckpt) = load_checkpoint(ws)?;
    let (data, points) = ws.load_dataset()?;
    let method = cfg.graph.method;
    let geo = ws.load_geometry(method)?;
    let ctx = ws.context(&points, &geo, &ckpt.model.config, method)?;
    let split = data.split.clone().ok_or_else(|| CliError::Validation("dataset has no split".into()))?;
    let test: Vec<usize> = if split.test.is_empty() { (0..data.dataset.len()).collect() } else { split.test.clone() };
    let inputs: Vec<Vec<f64>> = test.iter().take(b.samples).map(|&i| data.dataset.samples[i].u_q.clone()).collect();
    let latency = bench::measure_latency(&ckpt, &ctx, &inputs, b.warmup, b.repeats)?;
    let flops = flop_count(&ckpt.model.config, points.len(), geo.graph.directed_edge_count());
    let eval = train::evaluate(&ckpt, &ctx, &data.dataset, &test, ws.threads > 1)?;
    let err_pct = 100.0 * eval.mean;

    let report = match &b.telemetry {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::Validation(format!("missing telemetry trace {}", path.display())));
            }
            let iterations = b
                .iterations
                .ok_or_else(|| CliError::Validation("bench.iterations is required with a telemetry trace".into()))?;
            let trace = TelemetryTrace::from_csv_path(path, b.interval_s, b.scope)?;
            let energy = bench::energy_per_iteration(&trace, iterations)?;
            let power = energy * iterations as f64 / trace_duration(&trace);
            let mut r = BenchReport::new(Workspace::tag(cfg), energy, latency.ms_per_it, b.scope, Some(err_pct), Some(power))?;
            r.flops = Some(flops.total);
            r.dataset_size = Some(data.dataset.len());
            Some(r)
        }
        None => None,
    };

    let dir = ws.root().join("bench").join(Workspace::tag(cfg));
    ws.prepare_dir(&dir, cfg)?;
    if let Some(r) = &report {
        let emitted = bench::emit_report(std::slice::from_ref(r), false)?;
        fs::write(dir.join("bench_report.json"), emitted.json)?;
        fs::write(dir.join("bench_report.csv"), emitted.csv)?;
    }
    ws.write_summary(
        &dir,
        cfg,
        "bench",
        json!({
            "checkpoint": ckpt_path,
            "latency": latency,
            "flops": flops,
            "test_mean_percent": err_pct,
            "parameters": ckpt.model.parameter_count(),
            "report": report,
        }),
    )?;
    println!("{:.3} ms/it, {:.3e} FLOPs/sample, test error {:.3}%", latency.ms_per_it, flops.total, err_pct);
    Ok(())
}

fn trace_duration(t: &TelemetryTrace) -> f64 {
    match t.samples.len() {
        1 => t.interval,
        _ => t.samples.last().unwrap().0 - t.samples[0].0,
    }
}

pub fn report(ws: &Workspace, inputs: &Path, allow_mixed_scope: bool) -> Result<(), CliError> {
    let file = fs::File::open(inputs).map_err(|e| CliError::Validation(format!("cannot open {}: {e}", inputs.display())))?;
    let reports = bench::reports_from_inputs(file)?;
    let emitted = bench::emit_report(&reports, allow_mixed_scope)?;
    let dir = ws.root().join("report");
    ws.prepare_dir(&dir, &ws.cfg)?;
    fs::write(dir.join("report.json"), &emitted.json)?;
    fs::write(dir.join("report.csv"), &emitted.csv)?;
    print!("{}", emitted.csv);
    ws.write_summary(
        &dir,
        &ws.cfg,
        "report",
        json!({
            "inputs": inputs,
            "inputs_sha256": sha256_hex(&fs::read(inputs)?),
            "rows": reports.len(),
        }),
    )
}
