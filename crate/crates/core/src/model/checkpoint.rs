use serde::{Deserialize, Serialize};

use super::context::GraphContext;
use super::layout::VirsoModel;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::normalize::Normalizer;

/// A field reconstruction in physical units, n×C.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub s: Tensor,
}

/// Everything needed for inference: the model plus the normalizers it was
/// trained with and the hash of the graph it was trained on.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: VirsoModel,
    pub input_norm: Normalizer,
    pub target_norm: Normalizer,
    pub graph_hash: String,
    pub epoch: usize,
}

impl Checkpoint {
    /// Runs the model on a physical-unit input vector.
    pub fn predict(&self, ctx: &GraphContext, u_q: &[f64]) -> Result<Prediction> {
        let u = self.input_norm.apply(u_q)?;
        let out = self.model.forward(ctx, &u)?;
        let shape = out.shape().to_vec();
        if self.target_norm.channels() != shape[1] {
            return Err(Error::shape("predict", format!("{} target channels vs {} outputs", self.target_norm.channels(), shape[1])));
        }
        let s = Tensor::new(&shape, self.target_norm.invert(out.data())?)?;
        if !s.is_finite() {
            return Err(Error::InvalidInput("prediction contains non-finite values".into()));
        }
        Ok(Prediction { s })
    }
}
