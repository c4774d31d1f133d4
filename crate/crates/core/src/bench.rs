//! Hardware-efficiency metrics: per-iteration energy from power telemetry,
//! latency, energy-delay product, power-normalized accuracy, and report
//! emission.
//!
//! Telemetry adapter contract: an external sampler writes a UTF-8 CSV with
//! header `t_s,power_w`, one sample per line, timestamps in seconds and
//! strictly increasing, power in watts. Energy is the left-rectangle sum
//! `sum_i P(t_i) * (t_{i+1} - t_i)`.

use std::io::Read;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Checkpoint, GraphContext};

/// Where the power was measured. Board-level and device-level numbers are
/// not comparable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Device,
    Board,
}

impl std::fmt::Display for Scope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scope::Device => "device",
            Scope::Board => "board",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelemetryTrace {
    /// (timestamp s, power W)
    pub samples: Vec<(f64, f64)>,
    /// Nominal sampling period in seconds, used when a gap is unavailable.
    pub interval: f64,
    pub scope: Scope,
}

#[derive(Deserialize)]
struct Row {
    t_s: f64,
    power_w: f64,
}

impl TelemetryTrace {
    pub fn new(samples: Vec<(f64, f64)>, interval: f64, scope: Scope) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("telemetry trace is empty".into()));
        }
        if !(interval > 0.0 && interval.is_finite()) {
            return Err(Error::InvalidParameter(format!("sampling interval must be positive, got {interval}")));
        }
        for (i, &(t, p)) in samples.iter().enumerate() {
            if !t.is_finite() || !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidInput(format!("sample {i}: ({t}, {p}) is not a valid reading")));
            }
            if i > 0 && t <= samples[i - 1].0 {
                return Err(Error::InvalidInput(format!("timestamps not strictly increasing at sample {i}")));
            }
        }
        Ok(TelemetryTrace { samples, interval, scope })
    }

    pub fn from_csv<R: Read>(reader: R, interval: f64, scope: Scope) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let samples = rdr.deserialize::<Row>().map(|r| r.map(|r| (r.t_s, r.power_w))).collect::<Result<Vec<_>, _>>()?;
        Self::new(samples, interval, scope)
    }

    pub fn from_csv_path(path: &Path, interval: f64, scope: Scope) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|_| Error::MissingArtifact { path: path.to_path_buf(), hint: "telemetry CSV not found".into() })?;
        Self::from_csv(file, interval, scope)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t_s,power_w\n");
        for (t, p) in &self.samples {
            s.push_str(&format!("{t},{p}\n"));
        }
        s
    }

    /// Same trace with every power reading multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.samples.iter().map(|&(t, p)| (t, p * c)).collect(), self.interval, self.scope)
    }
}

/// Joules per iteration. Each sample holds until the next timestamp; a
/// single-sample trace uses the nominal interval.
pub fn energy_per_iteration(trace: &TelemetryTrace, iterations: usize) -> Result<f64> {
    if iterations == 0 {
        return Err(Error::InvalidParameter("iterations must be >= 1".into()));
    }
    let s = &trace.samples;
    let joules = match s.len() {
        0 => return Err(Error::InvalidInput("telemetry trace is empty".into())),
        1 => s[0].1 * trace.interval,
        _ => s.windows(2).map(|w| w[0].1 * (w[1].0 - w[0].0)).sum(),
    };
    Ok(joules / iterations as f64)
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {x}")))
    }
}

/// Energy-delay product in J·ms.
pub fn edp(energy_j_per_it: f64, latency_ms: f64) -> Result<f64> {
    positive("energy", energy_j_per_it)?;
    positive("latency", latency_ms)?;
    Ok(energy_j_per_it * latency_ms)
}

/// `(100 / error%) / power`: accuracy delivered per watt.
pub fn power_normalized_accuracy(mean_err_percent: f64, power_w: f64) -> Result<f64> {
    positive("error", mean_err_percent)?;
    positive("power", power_w)?;
    Ok(100.0 / mean_err_percent / power_w)
}

/// Output values per input value: `n * channels / inputs`.
pub fn reconstruction_ratio(n: usize, channels: usize, inputs: usize) -> Result<f64> {
    if n == 0 || channels == 0 || inputs == 0 {
        return Err(Error::InvalidParameter("reconstruction ratio needs positive counts".into()));
    }
    Ok((n * channels) as f64 / inputs as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub ms_per_it: f64,
    /// ms/it of each timed repeat.
    pub repeats: Vec<f64>,
    pub samples: usize,
    pub warmup: usize,
}

/// Streaming latency: batch size 1, `warmup` untimed predictions, then
/// `repeats` timed passes over `inputs`, averaged.
pub fn measure_latency(
    ckpt: &Checkpoint,
    ctx: &GraphContext,
    inputs: &[Vec<f64>],
    warmup: usize,
    repeats: usize,
) -> Result<LatencyReport> {
    if inputs.is_empty() || repeats == 0 {
        return Err(Error::InvalidParameter("latency needs at least one input and one repeat".into()));
    }
    for u in inputs.iter().cycle().take(warmup) {
        ckpt.predict(ctx, u)?;
    }
    let mut spans = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        for u in inputs {
            std::hint::black_box(ckpt.predict(ctx, u)?);
        }
        spans.push(start.elapsed().as_secs_f64() * 1e3 / inputs.len() as f64);
    }
    let ms_per_it = spans.iter().sum::<f64>() / repeats as f64;
    Ok(LatencyReport { ms_per_it, repeats: spans, samples: inputs.len(), warmup })
}

/// One row of a comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub model: String,
    pub error_percent: Option<f64>,
    pub flops: Option<f64>,
    pub energy_j_per_it: f64,
    pub latency_ms_per_it: f64,
    pub edp_j_ms: f64,
    pub power_w: Option<f64>,
    pub eta_per_watt: Option<f64>,
    pub dataset_size: Option<usize>,
    pub scope: Scope,
}

impl BenchReport {
    /// Fills in EDP and, when error and power are known, η.
    pub fn new(
        model: impl Into<String>,
        energy_j_per_it: f64,
        latency_ms_per_it: f64,
        scope: Scope,
        error_percent: Option<f64>,
        power_w: Option<f64>,
    ) -> Result<Self> {
        let eta = match (error_percent, power_w) {
            (Some(e), Some(p)) => Some(power_normalized_accuracy(e, p)?),
            _ => None,
        };
        Ok(BenchReport {
            model: model.into(),
            error_percent,
            flops: None,
            energy_j_per_it,
            latency_ms_per_it,
            edp_j_ms: edp(energy_j_per_it, latency_ms_per_it)?,
            power_w,
            eta_per_watt: eta,
            dataset_size: None,
            scope,
        })
    }

    fn check(&self) -> Result<()> {
        let fields = [Some(self.energy_j_per_it), Some(self.latency_ms_per_it), Some(self.edp_j_ms), self.error_percent, self.flops, self.power_w, self.eta_per_watt];
        if fields.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("report `{}` has non-finite fields", self.model)));
        }
        Ok(())
    }
}

/// Serialized comparison table.
#[derive(Clone, Debug, PartialEq)]
pub struct EmittedReport {
    pub json: String,
    pub csv: String,
}

/// JSON (canonical) and CSV renderings of `reports`. Mixing board- and
/// device-level reports is refused unless `allow_mixed_scope` is set.
pub fn emit_report(reports: &[BenchReport], allow_mixed_scope: bool) -> Result<EmittedReport> {
    let first = reports.first().ok_or_else(|| Error::InvalidInput("no reports to emit".into()))?;
    if !allow_mixed_scope {
        if let Some(other) = reports.iter().find(|r| r.scope != first.scope) {
            return Err(Error::MixedScope(format!(
                "`{}` is {}-level but `{}` is {}-level",
                first.model, first.scope, other.model, other.scope
            )));
        }
    }
    for r in reports {
        r.check()?;
    }
    let json = serde_json::to_string_pretty(reports)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        w.serialize(r)?;
    }
    let csv = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok(EmittedReport { json, csv })
}

/// Parses the CSV written by [`emit_report`].
pub fn parse_report_csv<R: Read>(reader: R) -> Result<Vec<BenchReport>> {
    let mut rdr = csv::Reader::from_reader(reader);
    Ok(rdr.deserialize().collect::<Result<Vec<BenchReport>, _>>()?)
}

/// Input row for recomputing a published table: model, error, FLOPs,
/// energy, latency, optional power, scope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PublishedRow {
    pub model: String,
    pub error_percent: Option<f64>,
    pub flops: Option<f64>,
    pub energy_j_per_it: f64,
    pub latency_ms_per_it: f64,
    pub power_w: Option<f64>,
    pub scope: Scope,
}

/// Reads published rows and derives EDP (and η when power is given).
pub fn reports_from_inputs<R: Read>(reader: R) -> Result<Vec<BenchReport>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize::<PublishedRow>() {
        let row = row?;
        let mut r = BenchReport::new(row.model, row.energy_j_per_it, row.latency_ms_per_it, row.scope, row.error_percent, row.power_w)?;
        r.flops = row.flops;
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_power_integral() {
        let samples = (0..=31).map(|i| (i as f64 * 0.1, 100.0)).collect();
        let t = TelemetryTrace::new(samples, 0.1, Scope::Device).unwrap();
        assert!((energy_per_iteration(&t, 310).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_sample_uses_nominal_interval() {
        let t = TelemetryTrace::new(vec![(0.0, 50.0)], 0.02, Scope::Board).unwrap();
        assert_eq!(energy_per_iteration(&t, 1).unwrap(), 1.0);
    }

    #[test]
    fn trace_validation() {
        assert!(TelemetryTrace::new(vec![], 0.1, Scope::Device).is_err());
        assert!(TelemetryTrace::new(vec![(0.0, 1.0), (0.0, 1.0)], 0.1, Scope::Device).is_err());
        assert!(TelemetryTrace::new(vec![(0.0, -1.0)], 0.1, Scope::Device).is_err());
    }

    #[test]
    fn csv_trace() {
        let t = TelemetryTrace::from_csv("t_s,power_w\n0,10\n0.5, 20\n1.5,0\n".as_bytes(), 0.5, Scope::Device).unwrap();
        assert_eq!(energy_per_iteration(&t, 1).unwrap(), 10.0 * 0.5 + 20.0 * 1.0);
        assert!(TelemetryTrace::from_csv("t_s,power_w\n0,abc\n".as_bytes(), 0.5, Scope::Device).is_err());
    }

    #[test]
    fn nonpositive_inputs_rejected() {
        assert!(edp(0.0, 1.0).is_err());
        assert!(power_normalized_accuracy(0.0, 1.0).is_err());
        assert!(reconstruction_ratio(0, 3, 2).is_err());
    }

    #[test]
    fn mixed_scope_refused() {
        let a = BenchReport::new("a", 1.0, 2.0, Scope::Device, None, None).unwrap();
        let b = BenchReport::new("b", 1.0, 2.0, Scope::Board, None, None).unwrap();
        assert!(matches!(emit_report(&[a.clone(), b.clone()], false), Err(Error::MixedScope(_))));
        assert!(emit_report(&[a, b], true).is_ok());
    }
}
