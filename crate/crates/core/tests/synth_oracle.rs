use virso_core::synth::{generate_dataset, generate_points, input_vector, manufactured_field, FieldParams, SynthSpec, BAND_WIDTH};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    v[v.len() / 2]
}

/// Points per unit area inside a disc of radius `r` around each point of
/// `centers`, counting only the part of the disc inside the unit square.
fn local_density(pts: &[[f64; 2]], centers: &[[f64; 2]], r: f64) -> Vec<f64> {
    centers
        .iter()
        .map(|c| {
            let count = pts.iter().filter(|p| (p[0] - c[0]).hypot(p[1] - c[1]) <= r).count();
            // area by a fine midpoint rule so the square's edges are handled
            let steps = 40;
            let h = 2.0 * r / steps as f64;
            let mut area = 0.0;
            for i in 0..steps {
                for j in 0..steps {
                    let (x, y) = (c[0] - r + (i as f64 + 0.5) * h, c[1] - r + (j as f64 + 0.5) * h);
                    if (x - c[0]).hypot(y - c[1]) <= r && (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y) {
                        area += h * h;
                    }
                }
            }
            count as f64 / area
        })
        .collect()
}

#[test]
fn near_wall_band_is_denser() {
    let spec = SynthSpec::default();
    let cloud = generate_points(&spec).unwrap();
    assert_eq!(cloud.len(), 400);
    let pts: Vec<[f64; 2]> = (0..cloud.len()).map(|i| [cloud.point(i)[0], cloud.point(i)[1]]).collect();
    assert!(pts.iter().all(|p| spec.wall_distance(p) > 0.0 && (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1])));
    let (band, interior): (Vec<[f64; 2]>, Vec<[f64; 2]>) =
        pts.iter().partition(|p| spec.wall_distance(&p[..]) <= BAND_WIDTH);
    // density by counting: points per unit area in each region
    let area_band = std::f64::consts::PI * ((spec.hole_radius + BAND_WIDTH).powi(2) - spec.hole_radius.powi(2));
    let area_rest = 1.0 - std::f64::consts::PI * (spec.hole_radius + BAND_WIDTH).powi(2);
    let ratio = (band.len() as f64 / area_band) / (interior.len() as f64 / area_rest);
    assert!(ratio >= 2.0, "band/interior density ratio {ratio}");

    // and locally: band points see at least twice the interior median density
    let r = 0.06;
    let far: Vec<[f64; 2]> = interior.iter().copied().filter(|p| spec.wall_distance(&p[..]) > BAND_WIDTH + r).collect();
    let near: Vec<[f64; 2]> = band.iter().copied().filter(|p| spec.wall_distance(&p[..]) >= 0.02 && spec.wall_distance(&p[..]) <= BAND_WIDTH - 0.02).collect();
    let d_far = median(local_density(&pts, &far, r));
    let d_near = median(local_density(&pts, &near, 0.02));
    assert!(d_near >= 2.0 * d_far, "near {d_near} far {d_far}");
}

#[test]
fn targets_equal_closed_form() {
    let spec = SynthSpec { samples: 12, ..SynthSpec::default() };
    let out = generate_dataset(&spec).unwrap();
    assert_eq!((out.dataset.n, out.dataset.q, out.dataset.channels), (400, 22, 3));
    for (s, f) in out.dataset.samples.iter().zip(&out.params) {
        assert_eq!(s.u_q, input_vector(&spec, f));
        for i in 0..out.points.len() {
            let p = out.points.point(i);
            let g = 1.0 - (-spec.wall_distance(p) / 0.1).exp();
            let pi = std::f64::consts::PI;
            let want = [
                f.inlet_temperature + f.amplitude * g * (pi * p[0]).sin() * (pi * p[1]).sin() * 1e-3,
                f.inlet_velocity * g,
                0.01 * f.inlet_velocity * f.inlet_velocity * g * (1.0 - g),
            ];
            for c in 0..3 {
                assert!((s.s.get(i, c) - want[c]).abs() <= 1e-12 * want[c].abs().max(1.0));
            }
        }
    }
    assert!(out.params.iter().all(|f| (540.0..660.0).contains(&f.amplitude)
        && (536.4..655.6).contains(&f.inlet_temperature)
        && (4.05..4.95).contains(&f.inlet_velocity)));
}

#[test]
fn reconstruction_ratio_is_large() {
    let out = generate_dataset(&SynthSpec { samples: 2, ..SynthSpec::default() }).unwrap();
    assert!((out.reconstruction_ratio() - 400.0 * 3.0 / 22.0).abs() < 1e-12);
    assert!(out.reconstruction_ratio() >= 40.0);
}

#[test]
fn zero_amplitude_gives_flat_temperature() {
    let spec = SynthSpec { amplitude_range: [0.0, 0.0], samples: 3, ..SynthSpec::default() };
    let out = generate_dataset(&spec).unwrap();
    for (s, f) in out.dataset.samples.iter().zip(&out.params) {
        assert!(s.u_q[2..].iter().all(|&q| q == 0.0));
        for i in 0..out.points.len() {
            assert_eq!(s.s.get(i, 0), f.inlet_temperature);
        }
    }
    let f = FieldParams { amplitude: 0.0, inlet_temperature: 600.0, inlet_velocity: 4.5 };
    // on the wall the velocity and turbulence vanish
    let wall = [0.5 + spec.hole_radius, 0.5];
    let v = manufactured_field(&spec, &wall, &f);
    assert_eq!(v, [600.0, 0.0, 0.0]);
}

#[test]
fn generation_is_deterministic_and_seeded() {
    let spec = SynthSpec { samples: 5, ..SynthSpec::default() };
    let a = generate_dataset(&spec).unwrap();
    let b = generate_dataset(&spec).unwrap();
    assert_eq!(a.points, b.points);
    assert_eq!(a.params, b.params);
    let c = generate_dataset(&SynthSpec { seed: 1, ..spec.clone() }).unwrap();
    assert_ne!(a.points, c.points);
    // sample i does not depend on how many samples were drawn
    let more = generate_dataset(&SynthSpec { samples: 9, ..spec }).unwrap();
    assert_eq!(&more.params[..5], &a.params[..]);
}

#[test]
fn spec_validation() {
    assert!(SynthSpec { n_target: 10, ..SynthSpec::default() }.validate().is_err());
    assert!(SynthSpec { amplitude_range: [5.0, 1.0], ..SynthSpec::default() }.validate().is_err());
    assert!(serde_json::from_str::<SynthSpec>(r#"{"n_target": 100, "oops": 1}"#).is_err());
}
