//! Graph construction over irregular point clouds: KNN, radius, and
//! density-adaptive V-KNN builders, inverse-distance edge weights, and
//! anchor hop embeddings.

mod anchors;
mod build;
#[allow(clippy::module_inception)]
mod graph;
mod kdtree;
mod points;

pub use anchors::{anchor_embeddings, anchor_embeddings_from, default_anchor_count, AnchorEmbedding};
pub use build::{
    build_knn, build_knn_brute_force, build_radius, build_vknn, compute_edge_weights, estimate_density, knn_lists,
    knn_lists_brute_force, VknnConfig, VknnGraph,
};
pub use graph::{DegreeStats, Graph};
pub use points::PointCloud;
