#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use virso_core::graph::PointCloud;

pub fn random_cloud(n: usize, d: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = (0..n * d).map(|_| rng.gen::<f64>()).collect();
    PointCloud::new(coords, d).unwrap()
}

use virso_core::graph::{anchor_embeddings, build_knn, compute_edge_weights, AnchorEmbedding, Graph};
use virso_core::model::{GraphContext, Variant, VirsoConfig};
use virso_core::spectral::{dense_eigen_reference, normalized_laplacian, EigenBasis};

pub struct Geometry {
    pub points: PointCloud,
    pub graph: Graph,
    pub basis: EigenBasis,
    pub anchors: AnchorEmbedding,
}

impl Geometry {
    pub fn new(points: PointCloud, k: usize, m: usize, alpha: usize, seed: u64) -> Self {
        let graph = compute_edge_weights(&build_knn(&points, k).unwrap(), &points).unwrap();
        let basis = dense_eigen_reference(&normalized_laplacian(&graph, false).unwrap(), m).unwrap();
        let anchors = anchor_embeddings(&graph, alpha, seed).unwrap();
        Geometry { points, graph, basis, anchors }
    }

    pub fn random(n: usize, k: usize, m: usize, alpha: usize, seed: u64) -> Self {
        Self::new(random_cloud(n, 2, seed), k, m, alpha, seed)
    }

    pub fn context(&self) -> GraphContext {
        GraphContext::new(&self.points, &self.graph, Some(&self.basis), Some(&self.anchors)).unwrap()
    }
}

pub fn small_config(variant: Variant, blocks: usize, d_v: usize, m: usize, alpha: usize) -> VirsoConfig {
    VirsoConfig {
        blocks,
        d_v,
        modes: m,
        d_latent: 6,
        embed_hidden: 10,
        head_hidden: 12,
        gate_hidden: 5,
        gate_weight_width: 3,
        alpha_anchors: alpha,
        variant,
        use_identity_skip: true,
        use_spectral_weighted_skip: true,
        collaboration: virso_core::model::Collaboration::Linear,
        weighted_laplacian: false,
        output_channels: 3,
        input_width: 7,
        spatial_dim: 2,
    }
}

pub fn random_vec(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}
