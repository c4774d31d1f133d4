use std::path::PathBuf;

/// Errors produced anywhere in the operator pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate density: every node is isolated at radius {radius}")]
    DegenerateDensity { radius: f64 },

    #[error("degenerate graph: node {node} has no neighbors")]
    DegenerateGraph { node: usize },

    #[error("eigensolver did not converge in {iterations} iterations (worst residual {worst_residual:.3e})")]
    ConvergenceFailure { iterations: usize, worst_residual: f64 },

    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("invalid usage: {0}")]
    InvalidUsage(String),

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("reports are not directly comparable: {0}")]
    MixedScope(String),

    #[error("missing artifact {path}: {hint}")]
    MissingArtifact { path: PathBuf, hint: String },

    #[error("malformed artifact: {0}")]
    Format(String),

    #[error("block {block}: {source}")]
    InBlock {
        block: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch { op, detail: detail.into() }
    }

    /// True for errors caused by bad user input or configuration rather than
    /// a failure while doing the work.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::InvalidInput(_)
                | Error::ShapeMismatch { .. }
                | Error::InvalidUsage(_)
                | Error::MixedScope(_)
                | Error::MissingArtifact { .. }
                | Error::Format(_)
                | Error::Json(_)
                | Error::TooLarge(_)
        )
    }
}
