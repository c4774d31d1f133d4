//! Per-channel affine normalization, fitted on training data only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest standard deviation used by gaussian normalization.
pub const SIGMA_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum NormMode {
    /// Map `[min, max]` of each channel onto `[low, high]`.
    Minmax { low: f64, high: f64 },
    /// Subtract the mean and divide by the standard deviation.
    Gaussian,
}

impl Default for NormMode {
    fn default() -> Self {
        NormMode::Minmax { low: -1.0, high: 1.0 }
    }
}

/// `y = scale * x + shift` per channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mode: NormMode,
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
    /// Number of rows the statistics were computed from.
    pub fitted_rows: usize,
}

impl Normalizer {
    /// Fits on `data`, a row-major array with `channels` columns.
    pub fn fit(mode: NormMode, data: &[f64], channels: usize) -> Result<Self> {
        Self::fit_rows(mode, data.chunks(channels.max(1)), channels)
    }

    /// Fits on an arbitrary sequence of rows of width `channels`.
    pub fn fit_rows<'a>(mode: NormMode, rows: impl IntoIterator<Item = &'a [f64]>, channels: usize) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidParameter("normalizer needs at least one channel".into()));
        }
        let mut count = 0usize;
        let mut lo = vec![f64::INFINITY; channels];
        let mut hi = vec![f64::NEG_INFINITY; channels];
        let mut mean = vec![0.0; channels];
        let mut m2 = vec![0.0; channels];
        for row in rows {
            if row.len() != channels {
                return Err(Error::shape("normalizer fit", format!("row of {} values, expected {channels}", row.len())));
            }
            count += 1;
            for (c, &x) in row.iter().enumerate() {
                if !x.is_finite() {
                    return Err(Error::InvalidInput(format!("non-finite value in channel {c}")));
                }
                lo[c] = lo[c].min(x);
                hi[c] = hi[c].max(x);
                let delta = x - mean[c];
                mean[c] += delta / count as f64;
                m2[c] += delta * (x - mean[c]);
            }
        }
        if count == 0 {
            return Err(Error::EmptySplit("no rows to fit a normalizer on".into()));
        }
        let (scale, shift) = match mode {
            NormMode::Minmax { low, high } => {
                if !(high > low) {
                    return Err(Error::InvalidParameter(format!("minmax range [{low}, {high}] is empty")));
                }
                (0..channels)
                    .map(|c| {
                        let range = hi[c] - lo[c];
                        // constant channel: shift only
                        let a = if range > 0.0 { (high - low) / range } else { 1.0 };
                        let b = if range > 0.0 { low - a * lo[c] } else { 0.5 * (low + high) - lo[c] };
                        (a, b)
                    })
                    .unzip()
            }
            NormMode::Gaussian => (0..channels)
                .map(|c| {
                    let sigma = (m2[c] / count as f64).sqrt().max(SIGMA_FLOOR);
                    (1.0 / sigma, -mean[c] / sigma)
                })
                .unzip(),
        };
        Ok(Normalizer { mode, scale, shift, fitted_rows: count })
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }

    fn check(&self, len: usize) -> Result<()> {
        if len % self.channels() != 0 {
            return Err(Error::shape("normalizer", format!("{len} values is not a multiple of {} channels", self.channels())));
        }
        Ok(())
    }

    pub fn apply(&self, data: &[f64]) -> Result<Vec<f64>> {
        self.check(data.len())?;
        let c = self.channels();
        Ok(data.iter().enumerate().map(|(i, &x)| self.scale[i % c] * x + self.shift[i % c]).collect())
    }

    pub fn invert(&self, data: &[f64]) -> Result<Vec<f64>> {
        self.check(data.len())?;
        let c = self.channels();
        Ok(data.iter().enumerate().map(|(i, &y)| (y - self.shift[i % c]) / self.scale[i % c]).collect())
    }

    /// Per-channel `(1/scale, -shift/scale)`: the affine map of the inverse.
    pub fn inverse_affine(&self) -> (Vec<f64>, Vec<f64>) {
        self.scale.iter().zip(&self.shift).map(|(a, b)| (1.0 / a, -b / a)).unzip()
    }
}
