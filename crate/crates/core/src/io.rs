//! On-disk artifacts: a JSON manifest next to little-endian binary blobs.
//! Floating-point payloads are stored as f32, indices as u32. Blob paths in
//! manifests are relative to the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::graph::{Graph, PointCloud};
use crate::model::{Checkpoint, VirsoConfig, VirsoModel};
use crate::normalize::Normalizer;
use crate::spectral::{EigenBasis, ModeSelection};
use crate::train::{Dataset, Sample, Split};

fn missing(path: &Path, hint: &str) -> Error {
    Error::MissingArtifact { path: path.to_path_buf(), hint: hint.to_string() }
}

fn read_bytes(path: &Path, hint: &str) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => missing(path, hint),
        _ => Error::Io(e),
    })
}

pub fn write_f32_blob(path: &Path, values: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_f32_blob(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = read_bytes(path, "binary blob referenced by a manifest")?;
    if bytes.len() != expected * 4 {
        return Err(Error::Format(format!("{}: {} bytes, expected {}", path.display(), bytes.len(), expected * 4)));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect())
}

fn write_u32_blob(path: &Path, values: &[usize]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for &v in values {
        let v = u32::try_from(v).map_err(|_| Error::TooLarge(format!("index {v} does not fit in u32")))?;
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn read_u32_blob(path: &Path, expected: usize) -> Result<Vec<usize>> {
    let bytes = read_bytes(path, "binary blob referenced by a manifest")?;
    if bytes.len() != expected * 4 {
        return Err(Error::Format(format!("{}: {} bytes, expected {}", path.display(), bytes.len(), expected * 4)));
    }
    Ok(bytes.chunks_exact(4).map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize).collect())
}

fn write_manifest<T: Serialize>(path: &Path, m: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, serde_json::to_string_pretty(m)? + "\n")?;
    Ok(())
}

fn read_manifest<T: DeserializeOwned>(path: &Path, hint: &str) -> Result<T> {
    let text = read_bytes(path, hint)?;
    serde_json::from_slice(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// `dir/stem.json` plus blob names derived from the stem.
fn blob_path(manifest: &Path, name: &str) -> PathBuf {
    manifest.parent().unwrap_or(Path::new(".")).join(name)
}

fn sibling(manifest: &Path, suffix: &str) -> String {
    let stem = manifest.file_stem().and_then(|s| s.to_str()).unwrap_or("artifact");
    format!("{stem}.{suffix}.bin")
}

fn expect_kind(path: &Path, got: &str, want: &str) -> Result<()> {
    if got != want {
        return Err(Error::Format(format!("{}: manifest kind `{got}`, expected `{want}`", path.display())));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct PointCloudManifest {
    kind: String,
    n: usize,
    d: usize,
    coords: String,
    #[serde(default)]
    provenance: Json,
}

pub fn write_point_cloud(path: &Path, points: &PointCloud, provenance: Json) -> Result<()> {
    let coords = sibling(path, "coords");
    let m = PointCloudManifest { kind: "point_cloud".into(), n: points.len(), d: points.dim(), coords: coords.clone(), provenance };
    write_manifest(path, &m)?;
    write_f32_blob(&blob_path(path, &coords), points.coords())
}

pub fn read_point_cloud(path: &Path) -> Result<PointCloud> {
    let m: PointCloudManifest = read_manifest(path, "point cloud manifest (run gen-data first)")?;
    expect_kind(path, &m.kind, "point_cloud")?;
    PointCloud::new(read_f32_blob(&blob_path(path, &m.coords), m.n * m.d)?, m.d)
}

#[derive(Serialize, Deserialize)]
struct GraphManifest {
    kind: String,
    n: usize,
    directed_edges: usize,
    edges: String,
    weights: Option<String>,
    hash: String,
    #[serde(default)]
    provenance: Json,
}

/// Edge blob: 2×E row-major, first row receivers, second row senders.
pub fn write_graph(path: &Path, graph: &Graph, provenance: Json) -> Result<()> {
    let e = graph.directed_edge_count();
    let mut idx = Vec::with_capacity(2 * e);
    idx.extend(graph.edges().iter().map(|p| p.0));
    idx.extend(graph.edges().iter().map(|p| p.1));
    let edges = sibling(path, "edges");
    let weights = graph.weights().map(|_| sibling(path, "weights"));
    let m = GraphManifest {
        kind: "graph".into(),
        n: graph.node_count(),
        directed_edges: e,
        edges: edges.clone(),
        weights: weights.clone(),
        hash: graph.content_hash(),
        provenance,
    };
    write_manifest(path, &m)?;
    write_u32_blob(&blob_path(path, &edges), &idx)?;
    if let (Some(name), Some(w)) = (weights, graph.weights()) {
        write_f32_blob(&blob_path(path, &name), w)?;
    }
    Ok(())
}

pub fn read_graph(path: &Path) -> Result<Graph> {
    let m: GraphManifest = read_manifest(path, "graph manifest (run prep-graph first)")?;
    expect_kind(path, &m.kind, "graph")?;
    let idx = read_u32_blob(&blob_path(path, &m.edges), 2 * m.directed_edges)?;
    let (first, second) = idx.split_at(m.directed_edges);
    let edges = first.iter().copied().zip(second.iter().copied()).collect();
    let weights = match &m.weights {
        Some(name) => Some(read_f32_blob(&blob_path(path, name), m.directed_edges)?),
        None => None,
    };
    let g = Graph::from_parts(m.n, edges, weights)?;
    if g.content_hash() != m.hash {
        return Err(Error::Format(format!("{}: content hash mismatch", path.display())));
    }
    Ok(g)
}

#[derive(Serialize, Deserialize)]
struct BasisManifest {
    kind: String,
    n: usize,
    m: usize,
    selection: ModeSelection,
    graph_hash: String,
    q: String,
    sigma: String,
    #[serde(default)]
    provenance: Json,
}

pub fn write_basis(path: &Path, basis: &EigenBasis, graph_hash: &str, provenance: Json) -> Result<()> {
    let (q, sigma) = (sibling(path, "q"), sibling(path, "sigma"));
    let m = BasisManifest {
        kind: "eigenbasis".into(),
        n: basis.n(),
        m: basis.m(),
        selection: basis.selection,
        graph_hash: graph_hash.to_string(),
        q: q.clone(),
        sigma: sigma.clone(),
        provenance,
    };
    write_manifest(path, &m)?;
    write_f32_blob(&blob_path(path, &q), basis.q.data())?;
    write_f32_blob(&blob_path(path, &sigma), &basis.sigma)
}

/// Loads a basis and checks it was computed for the graph with `graph_hash`.
pub fn read_basis(path: &Path, graph_hash: &str) -> Result<EigenBasis> {
    let m: BasisManifest = read_manifest(path, "eigenbasis manifest (run prep-graph first)")?;
    expect_kind(path, &m.kind, "eigenbasis")?;
    if m.graph_hash != graph_hash {
        return Err(Error::Format(format!("{}: basis belongs to graph {}, not {graph_hash}", path.display(), m.graph_hash)));
    }
    let q = Tensor::new(&[m.n, m.m], read_f32_blob(&blob_path(path, &m.q), m.n * m.m)?)?;
    let sigma = read_f32_blob(&blob_path(path, &m.sigma), m.m)?;
    Ok(EigenBasis { q, sigma, selection: m.selection })
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the blob.
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointManifest {
    kind: String,
    config: VirsoConfig,
    params: Vec<ParamEntry>,
    blob: String,
    input_norm: Normalizer,
    target_norm: Normalizer,
    graph_hash: String,
    epoch: usize,
    #[serde(default)]
    provenance: Json,
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint, provenance: Json) -> Result<()> {
    let blob = sibling(path, "params");
    let mut offset = 0;
    let mut data = Vec::with_capacity(ckpt.model.params.scalar_count());
    let params = ckpt
        .model
        .params
        .iter()
        .map(|(_, name, t)| {
            let e = ParamEntry { name: name.to_string(), shape: t.shape().to_vec(), offset };
            offset += 4 * t.len();
            data.extend_from_slice(t.data());
            e
        })
        .collect();
    let m = CheckpointManifest {
        kind: "checkpoint".into(),
        config: ckpt.model.config.clone(),
        params,
        blob: blob.clone(),
        input_norm: ckpt.input_norm.clone(),
        target_norm: ckpt.target_norm.clone(),
        graph_hash: ckpt.graph_hash.clone(),
        epoch: ckpt.epoch,
        provenance,
    };
    write_manifest(path, &m)?;
    write_f32_blob(&blob_path(path, &blob), &data)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let m: CheckpointManifest = read_manifest(path, "checkpoint manifest (run train first)")?;
    expect_kind(path, &m.kind, "checkpoint")?;
    let mut model = VirsoModel::new_unchecked_blocks(m.config, 0)?;
    if m.params.len() != model.params.len() {
        return Err(Error::Format(format!("{}: {} parameters, config implies {}", path.display(), m.params.len(), model.params.len())));
    }
    let total: usize = m.params.iter().map(|p| p.shape.iter().product::<usize>()).sum();
    let flat = read_f32_blob(&blob_path(path, &m.blob), total)?;
    let mut tensors = Vec::with_capacity(m.params.len());
    for (entry, (_, name, _)) in m.params.iter().zip(model.params.iter()) {
        if entry.name != name {
            return Err(Error::Format(format!("{}: parameter `{}` where `{name}` was expected", path.display(), entry.name)));
        }
        let len: usize = entry.shape.iter().product();
        let start = entry.offset / 4;
        let slice = flat.get(start..start + len).ok_or_else(|| Error::Format(format!("{}: bad offset", entry.name)))?;
        tensors.push(Tensor::new(&entry.shape, slice.to_vec())?);
    }
    model.params.load_values(&tensors)?;
    Ok(Checkpoint { model, input_norm: m.input_norm, target_norm: m.target_norm, graph_hash: m.graph_hash, epoch: m.epoch })
}

#[derive(Serialize, Deserialize)]
struct DatasetManifest {
    kind: String,
    n: usize,
    d: usize,
    q: usize,
    channels: usize,
    count: usize,
    split: Option<Vec<String>>,
    inputs: String,
    targets: String,
    /// Point-cloud manifest holding the shared coordinates.
    points: Option<String>,
    #[serde(default)]
    provenance: Json,
}

pub fn write_dataset(
    path: &Path,
    data: &Dataset,
    d: usize,
    split: Option<&Split>,
    points_manifest: Option<&str>,
    provenance: Json,
) -> Result<()> {
    let (inputs, targets) = (sibling(path, "inputs"), sibling(path, "targets"));
    let labels = match split {
        Some(s) => Some(s.labels(data.len())?.into_iter().map(String::from).collect()),
        None => None,
    };
    let m = DatasetManifest {
        kind: "dataset".into(),
        n: data.n,
        d,
        q: data.q,
        channels: data.channels,
        count: data.len(),
        split: labels,
        inputs: inputs.clone(),
        targets: targets.clone(),
        points: points_manifest.map(String::from),
        provenance,
    };
    write_manifest(path, &m)?;
    let u: Vec<f64> = data.samples.iter().flat_map(|s| s.u_q.iter().copied()).collect();
    let t: Vec<f64> = data.samples.iter().flat_map(|s| s.s.data().iter().copied()).collect();
    write_f32_blob(&blob_path(path, &inputs), &u)?;
    write_f32_blob(&blob_path(path, &targets), &t)
}

/// A dataset read back from disk.
pub struct LoadedDataset {
    pub dataset: Dataset,
    pub split: Option<Split>,
    pub d: usize,
    /// Resolved path of the point-cloud manifest, if recorded.
    pub points: Option<PathBuf>,
    pub provenance: Json,
}

pub fn read_dataset(path: &Path) -> Result<LoadedDataset> {
    let m: DatasetManifest = read_manifest(path, "dataset manifest (run gen-data first)")?;
    expect_kind(path, &m.kind, "dataset")?;
    let u = read_f32_blob(&blob_path(path, &m.inputs), m.count * m.q)?;
    let t = read_f32_blob(&blob_path(path, &m.targets), m.count * m.n * m.channels)?;
    let samples = (0..m.count)
        .map(|i| {
            Ok(Sample {
                id: i,
                u_q: u[i * m.q..(i + 1) * m.q].to_vec(),
                s: Tensor::new(&[m.n, m.channels], t[i * m.n * m.channels..(i + 1) * m.n * m.channels].to_vec())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let split = match &m.split {
        Some(labels) => Some(Split::from_labels(labels)?),
        None => None,
    };
    Ok(LoadedDataset {
        dataset: Dataset::new(samples)?,
        split,
        d: m.d,
        points: m.points.map(|p| blob_path(path, &p)),
        provenance: m.provenance,
    })
}

/// Reads the `provenance` block of any manifest.
pub fn read_provenance(path: &Path) -> Result<Json> {
    let v: Json = read_manifest(path, "manifest")?;
    Ok(v.get("provenance").cloned().unwrap_or(Json::Null))
}
