use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// One input/output pair in physical units.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: usize,
    pub u_q: Vec<f64>,
    /// n×C target field.
    pub s: Tensor,
}

/// Samples sharing one geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub n: usize,
    pub q: usize,
    pub channels: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let first = samples.first().ok_or_else(|| Error::EmptySplit("dataset has no samples".into()))?;
        let (q, n, channels) = (first.u_q.len(), first.s.rows(), first.s.cols());
        for s in &samples {
            if s.u_q.len() != q || s.s.shape() != [n, channels] {
                return Err(Error::shape("dataset", format!("sample {} does not match q={q}, n={n}, C={channels}", s.id)));
            }
            if !s.s.is_finite() || s.u_q.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!("sample {} has non-finite values", s.id)));
            }
        }
        Ok(Dataset { n, q, channels, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Sample indices of each partition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Split label per sample index ("train", "val", "test").
    pub fn labels(&self, count: usize) -> Result<Vec<&'static str>> {
        let mut out = vec![""; count];
        for (set, name) in [(&self.train, "train"), (&self.val, "val"), (&self.test, "test")] {
            for &i in set {
                match out.get_mut(i) {
                    Some(slot) if slot.is_empty() => *slot = name,
                    _ => return Err(Error::InvalidInput(format!("sample {i} is out of range or in two splits"))),
                }
            }
        }
        if out.iter().any(|l| l.is_empty()) {
            return Err(Error::InvalidInput("split does not cover every sample".into()));
        }
        Ok(out)
    }

    pub fn from_labels(labels: &[String]) -> Result<Self> {
        let mut split = Split { train: vec![], val: vec![], test: vec![] };
        for (i, l) in labels.iter().enumerate() {
            match l.as_str() {
                "train" => split.train.push(i),
                "val" => split.val.push(i),
                "test" => split.test.push(i),
                other => return Err(Error::Format(format!("unknown split label `{other}`"))),
            }
        }
        Ok(split)
    }
}

/// Shuffles `count` indices with `seed` and cuts them by `fractions`
/// (train, val, test). Train and val sizes are rounded, test takes the rest.
pub fn split_dataset(count: usize, fractions: [f64; 3], seed: u64) -> Result<Split> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("split fractions {fractions:?} must be in [0, 1] and sum to 1")));
    }
    let n_train = (fractions[0] * count as f64).round() as usize;
    let n_val = ((fractions[1] * count as f64).round() as usize).min(count - n_train.min(count));
    if n_train == 0 || n_val == 0 || n_train + n_val >= count {
        return Err(Error::EmptySplit(format!("fractions {fractions:?} of {count} samples leave a split empty")));
    }
    let mut idx: Vec<usize> = (0..count).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    Ok(Split { train: idx, val, test })
}
