use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::metrics::{percentiles, relative_l2, ChannelErrors, Percentiles};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::model::{GraphContext, VirsoModel};
use crate::normalize::Normalizer;

/// Samples evaluated per tape.
const EVAL_CHUNK: usize = 16;

/// Error summary of a model on one split, in physical units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub count: usize,
    /// Mean over samples of each channel's relative L2 error.
    pub per_channel_mean: Vec<f64>,
    /// Mean over samples and channels.
    pub mean: f64,
    /// Mean over samples of the channel-summed error (the early-stopping metric).
    pub channel_sum_mean: f64,
    /// Order statistics of the per-sample channel-mean error.
    pub percentiles: Percentiles,
    pub per_sample: Vec<f64>,
}

pub(crate) fn sample_errors(
    model: &VirsoModel,
    input_norm: &Normalizer,
    target_norm: &Normalizer,
    ctx: &GraphContext,
    data: &Dataset,
    indices: &[usize],
    parallel: bool,
) -> Result<Vec<ChannelErrors>> {
    let run = |chunk: &[usize]| -> Result<Vec<ChannelErrors>> {
        let inputs = chunk.iter().map(|&i| input_norm.apply(&data.samples[i].u_q)).collect::<Result<Vec<_>>>()?;
        let refs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
        let outputs = model.forward_batch(ctx, &refs)?;
        chunk
            .iter()
            .zip(outputs)
            .map(|(&i, out)| {
                let pred = Tensor::new(out.shape(), target_norm.invert(out.data())?)?;
                relative_l2(&pred, &data.samples[i].s)
            })
            .collect()
    };
    let chunks: Vec<&[usize]> = indices.chunks(EVAL_CHUNK).collect();
    let nested: Vec<Vec<ChannelErrors>> = if parallel {
        chunks.par_iter().map(|c| run(c)).collect::<Result<_>>()?
    } else {
        chunks.iter().map(|c| run(c)).collect::<Result<_>>()?
    };
    Ok(nested.into_iter().flatten().collect())
}

pub(crate) fn summarize(errors: &[ChannelErrors]) -> Result<EvalReport> {
    let first = errors.first().ok_or_else(|| Error::EmptySplit("nothing to evaluate".into()))?;
    let count = errors.len();
    let mut per_channel_mean = vec![0.0; first.per_channel.len()];
    for e in errors {
        for (acc, x) in per_channel_mean.iter_mut().zip(&e.per_channel) {
            *acc += x / count as f64;
        }
    }
    let per_sample: Vec<f64> = errors.iter().map(|e| e.mean).collect();
    let mean = per_sample.iter().sum::<f64>() / count as f64;
    let channel_sum_mean = errors.iter().map(ChannelErrors::sum).sum::<f64>() / count as f64;
    Ok(EvalReport { count, per_channel_mean, mean, channel_sum_mean, percentiles: percentiles(&per_sample)?, per_sample })
}

/// Evaluates a checkpoint on `indices` of `data`. With `parallel` the chunks
/// are spread over the rayon pool; results are gathered in index order so the
/// report is identical either way.
pub fn evaluate(
    ckpt: &crate::model::Checkpoint,
    ctx: &GraphContext,
    data: &Dataset,
    indices: &[usize],
    parallel: bool,
) -> Result<EvalReport> {
    if indices.is_empty() {
        return Err(Error::EmptySplit("evaluation split is empty".into()));
    }
    let errs = sample_errors(&ckpt.model, &ckpt.input_norm, &ckpt.target_norm, ctx, data, indices, parallel)?;
    summarize(&errs)
}
