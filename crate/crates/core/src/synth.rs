//! Manufactured-solution datasets on a square with a circular hole: sparse
//! boundary-style inputs, dense three-channel outputs.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::graph::PointCloud;
use crate::train::{Dataset, Sample};

/// Width of the densified band around the hole.
pub const BAND_WIDTH: f64 = 0.08;
/// Length scale of the wall envelope `g = 1 - exp(-dist / WALL_SCALE)`.
pub const WALL_SCALE: f64 = 0.1;
/// Output channels: temperature, speed, turbulence-like energy.
pub const CHANNELS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub n_target: usize,
    pub hole_center: [f64; 2],
    pub hole_radius: f64,
    /// Point density inside the band relative to the interior.
    pub densification: f64,
    pub profile_len: usize,
    pub amplitude_range: [f64; 2],
    pub inlet_temperature_range: [f64; 2],
    pub inlet_velocity_range: [f64; 2],
    pub samples: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_target: 400,
            hole_center: [0.5, 0.5],
            hole_radius: 0.25,
            densification: 4.0,
            profile_len: 20,
            amplitude_range: [540.0, 660.0],
            inlet_temperature_range: [536.4, 655.6],
            inlet_velocity_range: [4.05, 4.95],
            samples: 950,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_target < 50 {
            return bad(format!("n_target must be >= 50, got {}", self.n_target));
        }
        let [cx, cy] = self.hole_center;
        let r = self.hole_radius;
        if !(r > 0.0) || cx - r - BAND_WIDTH < 0.0 || cx + r + BAND_WIDTH > 1.0 || cy - r - BAND_WIDTH < 0.0 || cy + r + BAND_WIDTH > 1.0 {
            return bad("hole and its band must lie inside the unit square".into());
        }
        if !(self.densification >= 1.0) {
            return bad("densification must be >= 1".into());
        }
        if self.profile_len == 0 || self.samples == 0 {
            return bad("profile_len and samples must be >= 1".into());
        }
        for (name, [lo, hi]) in [
            ("amplitude_range", self.amplitude_range),
            ("inlet_temperature_range", self.inlet_temperature_range),
            ("inlet_velocity_range", self.inlet_velocity_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("{name} [{lo}, {hi}] is not a valid range"));
            }
        }
        Ok(())
    }

    /// Input width `q = profile_len + 2`.
    pub fn input_width(&self) -> usize {
        self.profile_len + 2
    }

    /// Distance from `p` to the hole boundary (negative inside the hole).
    pub fn wall_distance(&self, p: &[f64]) -> f64 {
        let (dx, dy) = (p[0] - self.hole_center[0], p[1] - self.hole_center[1]);
        (dx * dx + dy * dy).sqrt() - self.hole_radius
    }
}

/// Parameters of one manufactured sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldParams {
    pub amplitude: f64,
    pub inlet_temperature: f64,
    pub inlet_velocity: f64,
}

/// Closed-form target channels at one point.
pub fn manufactured_field(spec: &SynthSpec, p: &[f64], f: &FieldParams) -> [f64; CHANNELS] {
    use std::f64::consts::PI;
    let g = 1.0 - (-spec.wall_distance(p) / WALL_SCALE).exp();
    let t = f.inlet_temperature + f.amplitude * g * (PI * p[0]).sin() * (PI * p[1]).sin() * 1e-3;
    let v = f.inlet_velocity * g;
    let k = 0.01 * f.inlet_velocity * f.inlet_velocity * g * (1.0 - g);
    [t, v, k]
}

/// `[T_in, v_in, q_1 .. q_P]` with `q_j = A sin(pi j / (P + 1))`.
pub fn input_vector(spec: &SynthSpec, f: &FieldParams) -> Vec<f64> {
    let p = spec.profile_len;
    let mut u = Vec::with_capacity(p + 2);
    u.push(f.inlet_temperature);
    u.push(f.inlet_velocity);
    u.extend((1..=p).map(|j| f.amplitude * (std::f64::consts::PI * j as f64 / (p + 1) as f64).sin()));
    u
}

fn jittered_grid(spec: &SynthSpec, h: f64, keep: impl Fn(f64) -> bool, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
    let cells = (1.0 / h).ceil() as usize;
    let h = 1.0 / cells as f64;
    for i in 0..cells {
        for j in 0..cells {
            let x = (i as f64 + 0.5 + rng.gen_range(-0.3..0.3)) * h;
            let y = (j as f64 + 0.5 + rng.gen_range(-0.3..0.3)) * h;
            let d = spec.wall_distance(&[x, y]);
            if d > 0.0 && keep(d) {
                out.push(x);
                out.push(y);
            }
        }
    }
}

/// Jittered grid outside the hole, refined by `densification` inside the
/// band next to the hole, then randomly thinned to exactly `n_target` points.
pub fn generate_points(spec: &SynthSpec) -> Result<PointCloud> {
    spec.validate()?;
    use std::f64::consts::PI;
    let r = spec.hole_radius;
    let band_area = PI * ((r + BAND_WIDTH).powi(2) - r * r);
    let coarse_area = 1.0 - PI * (r + BAND_WIDTH).powi(2);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(u64::MAX);
    let mut density = spec.n_target as f64 / (coarse_area + spec.densification * band_area);
    for _ in 0..64 {
        let h = 1.0 / density.sqrt();
        let mut coords = Vec::new();
        jittered_grid(spec, h, |d| d > BAND_WIDTH, &mut rng, &mut coords);
        jittered_grid(spec, h / spec.densification.sqrt(), |d| d <= BAND_WIDTH, &mut rng, &mut coords);
        let count = coords.len() / 2;
        if count >= spec.n_target {
            let mut keep = sample(&mut rng, count, spec.n_target).into_vec();
            keep.sort_unstable();
            let picked = keep.iter().flat_map(|&i| [coords[2 * i], coords[2 * i + 1]]).collect();
            return PointCloud::new(picked, 2);
        }
        density *= 1.1;
    }
    Err(Error::InvalidParameter(format!("could not place {} points", spec.n_target)))
}

/// Generated cloud plus dataset.
pub struct SynthOutput {
    pub points: PointCloud,
    pub dataset: Dataset,
    pub params: Vec<FieldParams>,
}

impl SynthOutput {
    /// Output values per input value, `n * C / q`.
    pub fn reconstruction_ratio(&self) -> f64 {
        (self.dataset.n * self.dataset.channels) as f64 / self.dataset.q as f64
    }
}

/// Draws sample parameters (one derived stream per sample) and evaluates the
/// manufactured fields on the generated cloud.
pub fn generate_dataset(spec: &SynthSpec) -> Result<SynthOutput> {
    let points = generate_points(spec)?;
    let draw = |[lo, hi]: [f64; 2], rng: &mut ChaCha8Rng| if lo == hi { lo } else { rng.gen_range(lo..hi) };
    let params: Vec<FieldParams> = (0..spec.samples)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64);
            FieldParams {
                amplitude: draw(spec.amplitude_range, &mut rng),
                inlet_temperature: draw(spec.inlet_temperature_range, &mut rng),
                inlet_velocity: draw(spec.inlet_velocity_range, &mut rng),
            }
        })
        .collect();
    let samples = params
        .par_iter()
        .enumerate()
        .map(|(id, f)| {
            let mut data = Vec::with_capacity(points.len() * CHANNELS);
            for i in 0..points.len() {
                data.extend_from_slice(&manufactured_field(spec, points.point(i), f));
            }
            Ok(Sample { id, u_q: input_vector(spec, f), s: Tensor::new(&[points.len(), CHANNELS], data)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthOutput { points, dataset: Dataset::new(samples)?, params })
}
