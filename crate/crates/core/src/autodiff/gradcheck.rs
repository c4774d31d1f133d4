use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::Result;

/// Outcome of a finite-difference probe run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (parameter name, flat index, analytic, numeric) per probe.
    pub probes: Vec<(String, usize, f64, f64)>,
}

/// Relative discrepancy `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compare analytic gradients against central differences on
/// `probe_count` scalar parameters picked uniformly at random.
///
/// `loss_and_grad` must be deterministic and return gradients in store order.
pub fn grad_check<F>(
    params: &ParamStore,
    probe_count: usize,
    step: f64,
    seed: u64,
    mut loss_and_grad: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<(f64, Vec<Tensor>)>,
{
    let (_, grads) = loss_and_grad(params)?;
    let total = params.scalar_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = params.clone();
    let mut report = GradCheckReport { max_rel_error: 0.0, probes: Vec::with_capacity(probe_count) };
    for _ in 0..probe_count {
        let mut flat = rng.gen_range(0..total);
        let mut pid = 0;
        while flat >= params.tensors()[pid].len() {
            flat -= params.tensors()[pid].len();
            pid += 1;
        }
        let id = ParamId(pid);
        let orig = params.get(id).data()[flat];

        work.get_mut(id).data_mut()[flat] = orig + step;
        let (plus, _) = loss_and_grad(&work)?;
        work.get_mut(id).data_mut()[flat] = orig - step;
        let (minus, _) = loss_and_grad(&work)?;
        work.get_mut(id).data_mut()[flat] = orig;

        let numeric = (plus - minus) / (2.0 * step);
        let analytic = grads[pid].data()[flat];
        let rel = relative_error(analytic, numeric);
        report.max_rel_error = report.max_rel_error.max(rel);
        report.probes.push((params.name(id).to_string(), flat, analytic, numeric));
    }
    Ok(report)
}
