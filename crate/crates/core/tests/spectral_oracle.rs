mod common;

use proptest::prelude::*;
use virso_core::autodiff::Tensor;
use virso_core::graph::{build_knn, compute_edge_weights, Graph};
use virso_core::spectral::{
    dense_eigen_reference, lobpcg_smallest, normalized_laplacian, subspace_distance, EigenBasis,
};

#[test]
fn k2_spectrum_and_vector() {
    let g = Graph::from_directed(2, [(0, 1)]).unwrap();
    let l = normalized_laplacian(&g, false).unwrap();
    let b = dense_eigen_reference(&l, 2).unwrap();
    assert!(b.sigma[0].abs() < 1e-15 && (b.sigma[1] - 2.0).abs() < 1e-15);
    let s = 1.0 / 2f64.sqrt();
    assert!((b.q.get(0, 0) - s).abs() < 1e-15 && (b.q.get(1, 0) - s).abs() < 1e-15);
}

#[test]
fn triangle_spectrum() {
    let g = Graph::from_directed(3, [(0, 1), (1, 2), (2, 0)]).unwrap();
    let l = normalized_laplacian(&g, false).unwrap();
    let b = dense_eigen_reference(&l, 3).unwrap();
    for (got, want) in b.sigma.iter().zip([0.0, 1.5, 1.5]) {
        assert!((got - want).abs() < 1e-14, "{got} vs {want}");
    }
}

#[test]
fn path4_closed_form() {
    // normalized Laplacian of a path with n nodes: 1 - cos(πk/(n-1)) -> {0, 0.5, 1.5, 2} for n = 4
    let g = Graph::from_directed(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
    let l = normalized_laplacian(&g, false).unwrap();
    let b = dense_eigen_reference(&l, 4).unwrap();
    for (k, got) in b.sigma.iter().enumerate() {
        let closed = 1.0 - (std::f64::consts::PI * k as f64 / 3.0).cos();
        assert!((got - closed).abs() < 1e-14, "{got} vs {closed}");
    }
    for (got, want) in b.sigma.iter().zip([0.0, 0.5, 1.5, 2.0]) {
        assert!((got - want).abs() < 1e-14);
    }
}

#[test]
fn dense_basis_self_consistent_on_random_graph() {
    let p = common::random_cloud(100, 2, 5);
    let g = build_knn(&p, 6).unwrap();
    let l = normalized_laplacian(&g, false).unwrap();
    let b = dense_eigen_reference(&l, 10).unwrap();
    assert!(b.orthonormality_error() < 1e-12);
    let lq = {
        let mut out = vec![0.0; 100];
        let mut worst: f64 = 0.0;
        for j in 0..10 {
            let col: Vec<f64> = (0..100).map(|i| b.q.get(i, j)).collect();
            l.apply(&col, &mut out);
            let r: f64 = out.iter().zip(&col).map(|(a, c)| (a - b.sigma[j] * c).powi(2)).sum::<f64>().sqrt();
            worst = worst.max(r);
        }
        worst
    };
    assert!(lq < 1e-12, "{lq}");
    assert!(b.sigma.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn lobpcg_matches_dense_on_knn_cloud() {
    let p = common::random_cloud(200, 2, 17);
    let g = build_knn(&p, 8).unwrap();
    let l = normalized_laplacian(&g, false).unwrap();
    let reference = dense_eigen_reference(&l, 16).unwrap();
    let got = lobpcg_smallest(&l, 16, 1e-10, 3000, 1).unwrap();
    for (a, b) in got.sigma.iter().zip(&reference.sigma) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
    assert!(subspace_distance(&got, &reference) < 1e-6);
    assert!(got.orthonormality_error() < 1e-8);
    // deterministic per seed
    let again = lobpcg_smallest(&l, 16, 1e-10, 3000, 1).unwrap();
    assert_eq!(got, again);
}

#[test]
fn null_space_is_sqrt_degree() {
    let p = common::random_cloud(150, 2, 23);
    let g = build_knn(&p, 10).unwrap();
    let l = normalized_laplacian(&g, false).unwrap();
    let b = lobpcg_smallest(&l, 4, 1e-10, 3000, 0).unwrap();
    assert!(b.sigma[0].abs() <= 1e-8);
    let target: Vec<f64> = (0..150).map(|u| (g.degree(u) as f64).sqrt()).collect();
    let tn = target.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cos: f64 = (0..150).map(|i| b.q.get(i, 0) * target[i]).sum::<f64>() / tn;
    assert!(cos.abs() >= 1.0 - 1e-8, "{cos}");
}

#[test]
fn unit_weights_match_unweighted() {
    let p = virso_core::graph::PointCloud::from_rows(&[
        vec![0.0, 0.0],
        vec![1.0, 0.0],
        vec![0.0, 1.0],
        vec![1.0, 1.0],
    ])
    .unwrap();
    let g = compute_edge_weights(&build_knn(&p, 2).unwrap(), &p).unwrap();
    let a = normalized_laplacian(&g, false).unwrap();
    let b = normalized_laplacian(&g, true).unwrap();
    assert_eq!(a.triplets().collect::<Vec<_>>(), b.triplets().collect::<Vec<_>>());
}

#[test]
fn orthogonal_signal_projects_to_zero() {
    let p = common::random_cloud(60, 2, 2);
    let g = build_knn(&p, 5).unwrap();
    let l = normalized_laplacian(&g, false).unwrap();
    let all = dense_eigen_reference(&l, 60).unwrap();
    let low = dense_eigen_reference(&l, 5).unwrap();
    let v = Tensor::column_vector(&(0..60).map(|i| all.q.get(i, 40)).collect::<Vec<_>>());
    let c = low.gft(&v).unwrap();
    assert!(c.data().iter().all(|x| x.abs() < 1e-12));
    assert!(low.igft(&c).unwrap().data().iter().all(|x| x.abs() < 1e-12));
}

fn basis_for(seed: u64, m: usize) -> EigenBasis {
    let p = common::random_cloud(40, 2, seed);
    let g = build_knn(&p, 4).unwrap();
    dense_eigen_reference(&normalized_laplacian(&g, false).unwrap(), m).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn projection_contracts(seed in 0u64..1000, m in 1usize..40, vals in prop::collection::vec(-10.0f64..10.0, 40)) {
        let b = basis_for(seed, m);
        let v = Tensor::column_vector(&vals);
        let back = b.igft(&b.gft(&v).unwrap()).unwrap();
        prop_assert!(back.norm() <= v.norm() * (1.0 + 1e-12));
    }

    #[test]
    fn spectrum_in_range(seed in 0u64..1000, k in 1usize..8) {
        let p = common::random_cloud(40, 2, seed);
        let g = build_knn(&p, k).unwrap();
        let b = dense_eigen_reference(&normalized_laplacian(&g, false).unwrap(), 40).unwrap();
        for s in &b.sigma {
            prop_assert!(*s >= -1e-10 && *s <= 2.0 + 1e-10);
        }
    }
}
