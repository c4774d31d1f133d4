use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use sha2::{Digest, Sha256};
use virso_core::graph::{anchor_embeddings_from, AnchorEmbedding, Graph, PointCloud};
use virso_core::io::{self, LoadedDataset};
use virso_core::model::{GraphContext, VirsoConfig};
use virso_core::spectral::EigenBasis;

use crate::config::{GraphMethod, RunConfig};
use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize, Deserialize)]
pub struct AnchorManifest {
    pub kind: String,
    pub graph_hash: String,
    pub seed: u64,
    pub ids: Vec<usize>,
    #[serde(default)]
    pub provenance: Json,
}

/// Graph artifacts of one construction method.
pub struct Geometry {
    pub graph: Graph,
    pub basis: EigenBasis,
    pub anchors: AnchorEmbedding,
}

pub struct Workspace {
    pub cfg: RunConfig,
    pub threads: usize,
}

impl Workspace {
    pub fn new(cfg: RunConfig, threads: usize) -> Self {
        Workspace { cfg, threads }
    }

    pub fn root(&self) -> &Path {
        &self.cfg.out_dir
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.root().join("data").join("dataset.json")
    }

    pub fn points_path(&self) -> PathBuf {
        self.root().join("data").join("points.json")
    }

    pub fn graph_dir(&self, method: GraphMethod) -> PathBuf {
        self.root().join("graph").join(method.name())
    }

    /// `<variant>-<graph method>` for the configured model.
    pub fn tag(cfg: &RunConfig) -> String {
        format!("{}-{}", cfg.model.variant, cfg.graph.method.name())
    }

    pub fn provenance(&self, cfg: &RunConfig, command: &str) -> Json {
        let text = cfg.to_json();
        json!({
            "tool": "virso-kit",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "seed": cfg.seed,
            "config_sha256": sha256_hex(text.as_bytes()),
            "config": serde_json::from_str::<Json>(&text).expect("valid json"),
        })
    }

    /// Creates `dir` and drops the resolved config next to the artifacts.
    pub fn prepare_dir(&self, dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("resolved_config.json"), cfg.to_json())?;
        Ok(())
    }

    pub fn write_summary(&self, dir: &Path, cfg: &RunConfig, command: &str, body: Json) -> Result<(), CliError> {
        let summary = json!({
            "command": command,
            "status": "ok",
            "threads": self.threads,
            "provenance": self.provenance(cfg, command),
            "result": body,
        });
        let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Runtime(e.to_string()))?;
        fs::write(dir.join("summary.json"), &text)?;
        log::info!("{command}: wrote {}", dir.display());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, path: &Path, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn require(path: &Path, step: &str) -> Result<(), CliError> {
        if path.exists() {
            Ok(())
        } else {
            Err(CliError::Validation(format!("missing artifact {} (run `virso-kit {step}` first)", path.display())))
        }
    }

    pub fn load_dataset(&self) -> Result<(LoadedDataset, PointCloud), CliError> {
        let path = self.dataset_path();
        Self::require(&path, "gen-data")?;
        let data = io::read_dataset(&path)?;
        let points_path = data.points.clone().unwrap_or_else(|| self.points_path());
        Self::require(&points_path, "gen-data")?;
        let points = io::read_point_cloud(&points_path)?;
        if points.len() != data.dataset.n {
            return Err(CliError::Validation(format!(
                "point cloud has {} nodes but the dataset has {}",
                points.len(),
                data.dataset.n
            )));
        }
        Ok((data, points))
    }

    pub fn load_geometry(&self, method: GraphMethod) -> Result<Geometry, CliError> {
        let dir = self.graph_dir(method);
        let step = format!("prep-graph --graph {}", method.name());
        for f in ["graph.json", "basis.json", "anchors.json"] {
            Self::require(&dir.join(f), &step)?;
        }
        let graph = io::read_graph(&dir.join("graph.json"))?;
        let hash = graph.content_hash();
        let basis = io::read_basis(&dir.join("basis.json"), &hash)?;
        let text = fs::read_to_string(dir.join("anchors.json"))?;
        let m: AnchorManifest = serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("anchors.json: {e}")))?;
        if m.graph_hash != hash {
            return Err(CliError::Validation(format!("anchors in {} belong to a different graph; rerun {step}", dir.display())));
        }
        let mut anchors = anchor_embeddings_from(&graph, &m.ids)?;
        anchors.seed = m.seed;
        Ok(Geometry { graph, basis, anchors })
    }

    /// Context for `model`, checking the prepared artifacts agree with it.
    pub fn context(&self, points: &PointCloud, geo: &Geometry, model: &VirsoConfig, method: GraphMethod) -> Result<GraphContext, CliError> {
        let step = format!("prep-graph --graph {}", method.name());
        if geo.basis.m() != model.modes {
            return Err(CliError::Validation(format!(
                "prepared basis has {} modes but the model wants {}; rerun {step}",
                geo.basis.m(),
                model.modes
            )));
        }
        if geo.anchors.anchor_ids.len() != model.alpha_anchors {
            return Err(CliError::Validation(format!(
                "prepared embedding has {} anchors but the model wants {}; rerun {step}",
                geo.anchors.anchor_ids.len(),
                model.alpha_anchors
            )));
        }
        Ok(GraphContext::new(points, &geo.graph, Some(&geo.basis), Some(&geo.anchors))?)
    }
}
