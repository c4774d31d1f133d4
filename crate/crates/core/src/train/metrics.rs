use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Per-channel relative L2 errors of one prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelErrors {
    pub per_channel: Vec<f64>,
    pub mean: f64,
}

impl ChannelErrors {
    pub fn sum(&self) -> f64 {
        self.per_channel.iter().sum()
    }

    pub fn percent(&self) -> Vec<f64> {
        self.per_channel.iter().map(|e| 100.0 * e).collect()
    }
}

fn column_norms(t: &Tensor) -> Vec<f64> {
    let mut acc = vec![0.0; t.cols()];
    for r in 0..t.rows() {
        for (a, x) in acc.iter_mut().zip(t.row(r)) {
            *a += x * x;
        }
    }
    acc.into_iter().map(f64::sqrt).collect()
}

/// `||pred_o - truth_o|| / ||truth_o||` for every channel `o`.
pub fn relative_l2(pred: &Tensor, truth: &Tensor) -> Result<ChannelErrors> {
    if pred.shape() != truth.shape() || !truth.is_matrix() {
        return Err(Error::shape("relative_l2", format!("{:?} vs {:?}", pred.shape(), truth.shape())));
    }
    let norms = column_norms(truth);
    if let Some(c) = norms.iter().position(|&x| x == 0.0) {
        return Err(Error::UndefinedMetric(format!("truth channel {c} has zero norm")));
    }
    let mut diff = pred.clone();
    for (d, t) in diff.data_mut().iter_mut().zip(truth.data()) {
        *d -= t;
    }
    let per_channel: Vec<f64> = column_norms(&diff).iter().zip(&norms).map(|(e, t)| e / t).collect();
    let mean = per_channel.iter().sum::<f64>() / per_channel.len() as f64;
    Ok(ChannelErrors { per_channel, mean })
}

/// `|| ux^2 + uy^2 + uz^2 - u^2 || / || u^2 ||` with predicted components
/// (n×3) and the true squared magnitude.
pub fn magnitude_consistency_loss(components: &Tensor, truth_sq_magnitude: &[f64]) -> Result<f64> {
    if components.shape() != [truth_sq_magnitude.len(), 3] {
        return Err(Error::shape(
            "magnitude_consistency_loss",
            format!("components {:?} vs {} magnitudes", components.shape(), truth_sq_magnitude.len()),
        ));
    }
    let denom = truth_sq_magnitude.iter().map(|u| u * u).sum::<f64>().sqrt();
    if denom == 0.0 {
        return Err(Error::UndefinedMetric("true velocity magnitude is zero everywhere".into()));
    }
    let num = (0..components.rows())
        .map(|i| {
            let r = components.row(i);
            let e = r.iter().map(|x| x * x).sum::<f64>() - truth_sq_magnitude[i];
            e * e
        })
        .sum::<f64>()
        .sqrt();
    Ok(num / denom)
}

/// Order statistics of per-sample errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub best: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
    pub worst: f64,
}

/// Nearest-rank percentiles: the value at 1-based rank `ceil(p/100 * N)`.
pub fn percentiles(values: &[f64]) -> Result<Percentiles> {
    if values.is_empty() {
        return Err(Error::EmptySplit("no samples to summarize".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let rank = |p: f64| sorted[((p / 100.0 * n as f64).ceil() as usize).clamp(1, n) - 1];
    Ok(Percentiles { best: sorted[0], p25: rank(25.0), p50: rank(50.0), p75: rank(75.0), p95: rank(95.0), worst: sorted[n - 1] })
}
