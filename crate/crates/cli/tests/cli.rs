use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const TINY: &str = r#"{
  "schema_version": 1,
  "seed": 3,
  "synth": {"n_target": 120, "samples": 40},
  "spectral": {"modes": 8},
  "graph": {"knn": {"k": 6}, "vknn": {"k_min": 4, "k_max": 12, "density_radius": 0.15}},
  "model": {"blocks": 2, "d_v": 8, "d_latent": 8, "embed_hidden": 16, "head_hidden": 16},
  "train": {"max_epochs": 3, "batch_size": 8},
  "bench": {"samples": 4, "repeats": 1, "warmup": 1},
  "gradcheck": {"probes": 10, "tolerance": 1e-3}
}"#;

fn kit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_virso-kit"))
        .current_dir(dir)
        .args(args)
        .env("VIRSO_KIT_LOG", "error")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = kit(dir, args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn setup(cfg: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), cfg).unwrap();
    dir
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_data_is_deterministic() {
    let dir = setup(TINY);
    let p = dir.path();
    ok(p, &["gen-data", "--config", "c.json", "--out", "a"]);
    ok(p, &["gen-data", "--config", "c.json", "--out", "b"]);
    ok(p, &["gen-data", "--config", "c.json", "--out", "c", "--seed", "4"]);
    let hashes = |o: &str| json(&p.join(o).join("data/summary.json"))["result"]["sha256"].clone();
    assert_eq!(hashes("a"), hashes("b"));
    assert_ne!(hashes("a"), hashes("c"));
    let s = json(&p.join("a/data/summary.json"));
    assert_eq!(s["result"]["nodes"], 120);
    assert_eq!(s["provenance"]["seed"], 3);
    assert!(p.join("a/data/resolved_config.json").exists());
}

#[test]
fn validation_errors_exit_1() {
    let dir = setup(TINY);
    let p = dir.path();
    fs::write(p.join("bad.json"), r#"{"schema_version": 1, "model": {"depth": 3}}"#).unwrap();
    fs::write(p.join("v2.json"), r#"{"schema_version": 2}"#).unwrap();
    for args in [
        &["gen-data", "--config", "bad.json"][..],
        &["gen-data", "--config", "v2.json"],
        &["gen-data", "--config", "missing.json"],
        &["train", "--config", "c.json", "--variant", "nope"],
        &["frobnicate"],
        &["report", "--inputs", "missing.csv"],
    ] {
        assert_eq!(kit(p, args).status.code(), Some(1), "{args:?}");
    }
    let out = kit(p, &["train", "--config", "c.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("dataset.json") && err.contains("gen-data"), "{err}");

    ok(p, &["gen-data", "--config", "c.json"]);
    let err = String::from_utf8_lossy(&kit(p, &["train", "--config", "c.json", "--graph", "vknn"]).stderr).into_owned();
    assert!(err.contains("graph/vknn") && err.contains("prep-graph"), "{err}");
}

#[test]
fn pipeline_and_bit_reproducible_training() {
    let dir = setup(TINY);
    let p = dir.path();
    ok(p, &["gen-data", "--config", "c.json", "--out", "r"]);
    ok(p, &["prep-graph", "--config", "c.json", "--out", "r"]);
    ok(p, &["train", "--config", "c.json", "--out", "r", "--threads", "1"]);
    let run = p.join("r/train/full-knn");
    let curve = fs::read(run.join("loss_curve.csv")).unwrap();
    let params = fs::read(run.join("checkpoint.params.bin")).unwrap();
    let manifest = fs::read(run.join("checkpoint.json")).unwrap();

    // rerun from the artifact directory's own resolved config
    let resolved = run.join("resolved_config.json");
    fs::copy(&resolved, p.join("again.json")).unwrap();
    ok(p, &["train", "--config", "again.json", "--threads", "1"]);
    assert_eq!(fs::read(run.join("loss_curve.csv")).unwrap(), curve);
    assert_eq!(fs::read(run.join("checkpoint.params.bin")).unwrap(), params);
    assert_eq!(fs::read(run.join("checkpoint.json")).unwrap(), manifest);

    ok(p, &["eval", "--config", "c.json", "--out", "r", "--split", "val"]);
    let e = json(&p.join("r/eval/full-knn/summary.json"));
    assert_eq!(e["result"]["samples"], json(&p.join("r/data/summary.json"))["result"]["split"][1]);

    ok(p, &["gradcheck", "--config", "c.json", "--out", "r"]);
    assert_eq!(json(&p.join("r/gradcheck/full-knn/summary.json"))["result"]["pass"], true);

    // spatial-only checkpoint missing; the error names it
    let out = kit(p, &["eval", "--config", "c.json", "--out", "r", "--variant", "spatial"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("spatial_only-knn"));
}

#[test]
fn bench_with_power_trace() {
    let dir = setup(TINY);
    let p = dir.path();
    let trace: String = std::iter::once("t_s,power_w\n".to_string())
        .chain((0..=10).map(|i| format!("{},{}\n", i as f64 * 0.1, 200.0)))
        .collect();
    fs::write(p.join("trace.csv"), trace).unwrap();
    let cfg = TINY.replace(
        r#""bench": {"samples": 4, "repeats": 1, "warmup": 1}"#,
        r#""bench": {"samples": 4, "repeats": 1, "warmup": 1, "telemetry": "trace.csv", "iterations": 100, "interval_s": 0.1}"#,
    );
    fs::write(p.join("c.json"), cfg).unwrap();
    ok(p, &["gen-data", "--config", "c.json"]);
    ok(p, &["prep-graph", "--config", "c.json"]);
    ok(p, &["train", "--config", "c.json", "--threads", "1"]);
    ok(p, &["bench", "--config", "c.json"]);
    let s = json(&p.join("virso-out/bench/full-knn/summary.json"));
    let r = &s["result"]["report"];
    // 200 W for 1 s over 100 iterations
    assert!((r["energy_j_per_it"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    assert!((r["power_w"].as_f64().unwrap() - 200.0).abs() < 1e-9);
    let lat = r["latency_ms_per_it"].as_f64().unwrap();
    assert!((r["edp_j_ms"].as_f64().unwrap() - 2.0 * lat).abs() < 1e-9);
    assert!(s["result"]["flops"]["total"].as_f64().unwrap() > 0.0);
    assert!(p.join("virso-out/bench/full-knn/bench_report.csv").exists());
}

#[test]
fn runtime_failure_exits_2() {
    let dir = setup(&TINY.replace(r#""tolerance": 1e-3"#, r#""tolerance": 1e-300"#));
    let p = dir.path();
    ok(p, &["gen-data", "--config", "c.json"]);
    ok(p, &["prep-graph", "--config", "c.json"]);
    assert_eq!(kit(p, &["gradcheck", "--config", "c.json"]).status.code(), Some(2));
}

#[test]
fn report_recomputes_edp() {
    let dir = setup(TINY);
    let p = dir.path();
    let table = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/table5.csv");
    ok(p, &["report", "--inputs", table.to_str().unwrap()]);
    let rows = json(&p.join("virso-out/report/report.json"));
    let published = [206.2, 2.91, 2.86, 0.96, 0.46, 2.32, 7.03, 10.1];
    for (row, want) in rows.as_array().unwrap().iter().zip(published) {
        let got = row["edp_j_ms"].as_f64().unwrap();
        assert!((got - want).abs() / want < 0.005, "{row}");
    }
    let mixed = p.join("mixed.csv");
    fs::write(
        &mixed,
        "model,error_percent,flops,energy_j_per_it,latency_ms_per_it,power_w,scope\na,1,,1,1,,device\nb,1,,1,1,,board\n",
    )
    .unwrap();
    assert_eq!(kit(p, &["report", "--inputs", mixed.to_str().unwrap()]).status.code(), Some(1));
    ok(p, &["report", "--inputs", mixed.to_str().unwrap(), "--allow-mixed-scope"]);
}

#[test]
fn ablate_emits_ordered_table() {
    let dir = setup(&TINY.replace(r#""max_epochs": 3"#, r#""max_epochs": 1"#));
    let p = dir.path();
    ok(p, &["gen-data", "--config", "c.json"]);
    ok(p, &["ablate", "--config", "c.json", "--threads", "1"]);
    let table = fs::read_to_string(p.join("virso-out/ablate/table.csv")).unwrap();
    let keys: Vec<String> = table.lines().skip(1).map(|l| l.split(',').take(2).collect::<Vec<_>>().join("-")).collect();
    assert_eq!(
        keys,
        [
            "spatial_only-knn",
            "spectral_only-knn",
            "no_skip-knn",
            "full-knn",
            "spatial_only-vknn",
            "spectral_only-vknn",
            "no_skip-vknn",
            "full-vknn"
        ]
    );
    let s = json(&p.join("virso-out/ablate/summary.json"));
    assert_eq!(s["result"]["orderings"].as_array().unwrap().len(), 4);
    assert!(p.join("virso-out/graph/vknn/graph.json").exists());
}
