use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use virso_core::bench::Scope;
use virso_core::graph::{default_anchor_count, VknnConfig};
use virso_core::model::{Collaboration, Variant, VirsoConfig};
use virso_core::spectral::ModeSelection;
use virso_core::synth::SynthSpec;
use virso_core::train::Schedule;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GraphMethod {
    #[default]
    Knn,
    Radius,
    Vknn,
}

impl GraphMethod {
    pub fn name(self) -> &'static str {
        match self {
            GraphMethod::Knn => "knn",
            GraphMethod::Radius => "radius",
            GraphMethod::Vknn => "vknn",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnnParams {
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiusParams {
    pub r: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphSection {
    pub method: GraphMethod,
    pub knn: KnnParams,
    pub radius: RadiusParams,
    pub vknn: VknnConfig,
}

impl Default for GraphSection {
    fn default() -> Self {
        GraphSection {
            method: GraphMethod::Knn,
            knn: KnnParams { k: 10 },
            radius: RadiusParams { r: 0.08 },
            vknn: VknnConfig::new(10, 40, 0.1),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Dense up to the dense solver's size limit, LOBPCG above it.
    #[default]
    Auto,
    Dense,
    Lobpcg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralSection {
    pub modes: usize,
    pub solver: Solver,
    pub tol: f64,
    pub max_iter: usize,
    pub selection: ModeSelection,
    pub weighted: bool,
}

impl Default for SpectralSection {
    fn default() -> Self {
        SpectralSection { modes: 64, solver: Solver::Auto, tol: 1e-9, max_iter: 3000, selection: ModeSelection::Smallest, weighted: false }
    }
}

/// Architecture settings; node count, input width, channel count and
/// dimension come from the dataset, the mode count from `spectral`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub blocks: usize,
    pub d_v: usize,
    pub d_latent: usize,
    pub embed_hidden: usize,
    pub head_hidden: usize,
    pub gate_hidden: usize,
    pub gate_weight_width: usize,
    /// `ceil(log2 n)` when absent.
    pub alpha_anchors: Option<usize>,
    pub variant: Variant,
    pub use_identity_skip: bool,
    pub use_spectral_weighted_skip: bool,
    pub collaboration: Collaboration,
}

impl Default for ModelSection {
    fn default() -> Self {
        let c = VirsoConfig::heat_exchanger(10);
        ModelSection {
            blocks: c.blocks,
            d_v: c.d_v,
            d_latent: c.d_latent,
            embed_hidden: c.embed_hidden,
            head_hidden: c.head_hidden,
            gate_hidden: c.gate_hidden,
            gate_weight_width: c.gate_weight_width,
            alpha_anchors: None,
            variant: Variant::Full,
            use_identity_skip: true,
            use_spectral_weighted_skip: true,
            collaboration: Collaboration::Linear,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub warmup: usize,
    pub repeats: usize,
    /// Test samples replayed per timed pass.
    pub samples: usize,
    /// Power trace (`t_s,power_w`) recorded by an external sampler.
    pub telemetry: Option<PathBuf>,
    pub interval_s: f64,
    pub scope: Scope,
    /// Inference iterations covered by the trace.
    pub iterations: Option<usize>,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection { warmup: 5, repeats: 3, samples: 16, telemetry: None, interval_s: 0.1, scope: Scope::Device, iterations: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    SpatialOnly,
    SpectralOnly,
    NoSkip,
    Full,
}

impl AblationVariant {
    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::SpatialOnly => "spatial_only",
            AblationVariant::SpectralOnly => "spectral_only",
            AblationVariant::NoSkip => "no_skip",
            AblationVariant::Full => "full",
        }
    }

    /// Spectral-only with both residual skips removed for `NoSkip`.
    pub fn apply(self, m: &mut ModelSection) {
        match self {
            AblationVariant::SpatialOnly => m.variant = Variant::SpatialOnly,
            AblationVariant::SpectralOnly => m.variant = Variant::SpectralOnly,
            AblationVariant::Full => m.variant = Variant::Full,
            AblationVariant::NoSkip => {
                m.variant = Variant::SpectralOnly;
                m.use_identity_skip = false;
                m.use_spectral_weighted_skip = false;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblateSection {
    pub variants: Vec<AblationVariant>,
    pub graphs: Vec<GraphMethod>,
}

impl Default for AblateSection {
    fn default() -> Self {
        AblateSection {
            variants: vec![AblationVariant::SpatialOnly, AblationVariant::SpectralOnly, AblationVariant::NoSkip, AblationVariant::Full],
            graphs: vec![GraphMethod::Knn, GraphMethod::Vknn],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckSection {
    pub probes: usize,
    pub step: f64,
    pub tolerance: f64,
    /// Dataset sample used as input and target.
    pub sample: usize,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        GradcheckSection { probes: 30, step: 1e-4, tolerance: 1e-4, sample: 0 }
    }
}

fn default_split() -> [f64; 3] {
    [12.0 / 19.0, 3.0 / 19.0, 4.0 / 19.0]
}

fn default_out() -> PathBuf {
    PathBuf::from("virso-out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Drives every random stream: sampling, split, anchors, eigensolver
    /// start block, initialization and batch order.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub synth: SynthSpec,
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    #[serde(default)]
    pub graph: GraphSection,
    #[serde(default)]
    pub spectral: SpectralSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: Schedule,
    #[serde(default)]
    pub bench: BenchSection,
    #[serde(default)]
    pub ablate: AblateSection,
    #[serde(default)]
    pub gradcheck: GradcheckSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str(r#"{"schema_version": 1}"#).expect("defaults deserialize")
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub variant: Option<Variant>,
    pub graph: Option<GraphMethod>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        match raw.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => return Err(format!("unsupported schema_version {v}, expected {SCHEMA_VERSION}")),
            None => return Err("missing schema_version".into()),
        }
        serde_json::from_value(raw).map_err(|e| e.to_string())
    }

    /// Applies overrides, propagates the seed, and validates every section.
    pub fn resolve(mut self, o: &Overrides) -> Result<Self, CliError> {
        if let Some(out) = &o.out {
            self.out_dir = out.clone();
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(v) = o.variant {
            self.model.variant = v;
        }
        if let Some(g) = o.graph {
            self.graph.method = g;
        }
        self.synth.seed = self.seed;
        self.train.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), CliError> {
        let v = |e: virso_core::Error| CliError::Validation(e.to_string());
        self.synth.validate().map_err(v)?;
        self.train.validate().map_err(v)?;
        if self.split.iter().any(|f| !(*f >= 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(CliError::Validation(format!("split fractions must be non-negative and sum to 1, got {:?}", self.split)));
        }
        if self.spectral.modes < 1 {
            return Err(CliError::Validation("spectral.modes must be >= 1".into()));
        }
        if self.graph.knn.k < 1 {
            return Err(CliError::Validation("graph.knn.k must be >= 1".into()));
        }
        if !(self.graph.radius.r > 0.0) {
            return Err(CliError::Validation("graph.radius.r must be > 0".into()));
        }
        if self.ablate.variants.is_empty() || self.ablate.graphs.is_empty() {
            return Err(CliError::Validation("ablate.variants and ablate.graphs must be non-empty".into()));
        }
        if self.gradcheck.probes < 1 || !(self.gradcheck.step > 0.0) {
            return Err(CliError::Validation("gradcheck needs probes >= 1 and step > 0".into()));
        }
        if self.bench.repeats < 1 || self.bench.samples < 1 {
            return Err(CliError::Validation("bench needs repeats >= 1 and samples >= 1".into()));
        }
        // a dry resolution catches inconsistent widths before any work starts
        self.model_config(self.synth.n_target, self.synth.input_width(), virso_core::synth::CHANNELS, 2)?;
        Ok(())
    }

    /// Full architecture for a dataset with `n` nodes, `q` inputs, `c`
    /// channels in `d` dimensions.
    pub fn model_config(&self, n: usize, q: usize, c: usize, d: usize) -> Result<VirsoConfig, CliError> {
        let m = &self.model;
        let cfg = VirsoConfig {
            blocks: m.blocks,
            d_v: m.d_v,
            modes: self.spectral.modes,
            d_latent: m.d_latent,
            embed_hidden: m.embed_hidden,
            head_hidden: m.head_hidden,
            gate_hidden: m.gate_hidden,
            gate_weight_width: m.gate_weight_width,
            alpha_anchors: m.alpha_anchors.unwrap_or_else(|| default_anchor_count(n)),
            variant: m.variant,
            use_identity_skip: m.use_identity_skip,
            use_spectral_weighted_skip: m.use_spectral_weighted_skip,
            collaboration: m.collaboration,
            weighted_laplacian: self.spectral.weighted,
            output_channels: c,
            input_width: q,
            spatial_dim: d,
        };
        cfg.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
