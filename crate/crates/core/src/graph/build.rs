use serde::{Deserialize, Serialize};

use super::graph::{DegreeStats, Graph};
use super::kdtree::{Candidate, KdTree};
use super::points::PointCloud;
use crate::error::{Error, Result};

/// Parameters of the density-adaptive (V-KNN) construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VknnConfig {
    pub k_min: usize,
    pub k_max: usize,
    #[serde(default = "default_alpha_floor")]
    pub alpha_floor: usize,
    pub density_radius: f64,
}

fn default_alpha_floor() -> usize {
    1
}

impl VknnConfig {
    pub fn new(k_min: usize, k_max: usize, density_radius: f64) -> Self {
        VknnConfig { k_min, k_max, alpha_floor: 1, density_radius }
    }

    pub fn floor(&self) -> usize {
        self.alpha_floor * self.k_min
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k_min < 1 || self.k_min > self.k_max || self.k_max >= n {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= k_min ({}) <= k_max ({}) < n ({n})",
                self.k_min, self.k_max
            )));
        }
        if self.alpha_floor < 1 || self.floor() >= n {
            return Err(Error::InvalidParameter(format!(
                "alpha_floor {} gives a floor of {} neighbors for {n} nodes",
                self.alpha_floor,
                self.floor()
            )));
        }
        if !(self.density_radius > 0.0) {
            return Err(Error::InvalidParameter(format!("density_radius must be > 0, got {}", self.density_radius)));
        }
        Ok(())
    }

    /// `max(alpha_floor * k_min, floor(k_max * d_i / d_max))`.
    pub fn neighbor_count(&self, density: usize, d_max: usize) -> usize {
        self.floor().max(self.k_max * density / d_max)
    }
}

/// A V-KNN graph together with the quantities that produced it.
#[derive(Clone, Debug)]
pub struct VknnGraph {
    pub graph: Graph,
    pub density: Vec<usize>,
    pub d_max: usize,
    /// Per-node neighbor request `k_i` (out-degree before symmetrization).
    pub k_per_node: Vec<usize>,
    pub pre_symmetrization_min: usize,
    pub pre_symmetrization_max: usize,
}

impl VknnGraph {
    pub fn post_symmetrization(&self) -> DegreeStats {
        self.graph.degree_stats()
    }
}

fn check_k(points: &PointCloud, k: usize) -> Result<()> {
    if k < 1 || k >= points.len() {
        return Err(Error::InvalidParameter(format!("k must satisfy 1 <= k < n = {}, got {k}", points.len())));
    }
    Ok(())
}

fn check_radius(r: f64) -> Result<()> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidParameter(format!("radius must be positive and finite, got {r}")));
    }
    Ok(())
}

/// k nearest neighbors of every node through a KD-tree; ties broken by index.
pub fn knn_lists(points: &PointCloud, ks: &[usize]) -> Vec<Vec<usize>> {
    let tree = KdTree::build(points);
    (0..points.len()).map(|i| tree.knn(i, ks[i])).collect()
}

/// All-pairs nearest neighbors in O(n² log n), same ordering rule as the tree.
pub fn knn_lists_brute_force(points: &PointCloud, ks: &[usize]) -> Vec<Vec<usize>> {
    (0..points.len())
        .map(|i| {
            let mut c: Vec<Candidate> = (0..points.len())
                .filter(|&j| j != i)
                .map(|j| Candidate { d2: points.dist2(i, j), idx: j })
                .collect();
            c.sort_unstable();
            c.truncate(ks[i]);
            c.into_iter().map(|c| c.idx).collect()
        })
        .collect()
}

fn symmetrize(n: usize, lists: &[Vec<usize>]) -> Result<Graph> {
    Graph::from_directed(n, lists.iter().enumerate().flat_map(|(u, l)| l.iter().map(move |&v| (u, v))))
}

pub fn build_knn(points: &PointCloud, k: usize) -> Result<Graph> {
    check_k(points, k)?;
    let lists = knn_lists(points, &vec![k; points.len()]);
    symmetrize(points.len(), &lists)
}

/// Reference construction used to cross-check [`build_knn`].
pub fn build_knn_brute_force(points: &PointCloud, k: usize) -> Result<Graph> {
    check_k(points, k)?;
    let lists = knn_lists_brute_force(points, &vec![k; points.len()]);
    symmetrize(points.len(), &lists)
}

/// Edge `(u, v)` iff `0 < |x_u - x_v| <= r`. Isolated nodes are allowed and logged.
pub fn build_radius(points: &PointCloud, r: f64) -> Result<Graph> {
    check_radius(r)?;
    let tree = KdTree::build(points);
    let r2 = r * r;
    let g = Graph::from_directed(
        points.len(),
        (0..points.len()).flat_map(|i| tree.within(i, r2).into_iter().map(move |j| (i, j))),
    )?;
    let isolated = g.isolated_nodes().len();
    if isolated > 0 {
        log::warn!("radius graph at r={r}: {isolated} isolated node(s)");
    }
    Ok(g)
}

/// Number of other points within radius `r` of every node.
pub fn estimate_density(points: &PointCloud, r: f64) -> Result<Vec<usize>> {
    check_radius(r)?;
    let tree = KdTree::build(points);
    let r2 = r * r;
    Ok((0..points.len()).map(|i| tree.within(i, r2).len()).collect())
}

pub fn build_vknn(points: &PointCloud, cfg: &VknnConfig) -> Result<VknnGraph> {
    cfg.validate(points.len())?;
    let density = estimate_density(points, cfg.density_radius)?;
    let d_max = density.iter().copied().max().unwrap_or(0);
    if d_max == 0 {
        return Err(Error::DegenerateDensity { radius: cfg.density_radius });
    }
    let k_per_node: Vec<usize> = density.iter().map(|&d| cfg.neighbor_count(d, d_max)).collect();
    let lists = knn_lists(points, &k_per_node);
    let graph = symmetrize(points.len(), &lists)?;
    Ok(VknnGraph {
        pre_symmetrization_min: lists.iter().map(Vec::len).min().unwrap_or(0),
        pre_symmetrization_max: lists.iter().map(Vec::len).max().unwrap_or(0),
        graph,
        density,
        d_max,
        k_per_node,
    })
}

/// Inverse-distance weights divided by the largest one, so the closest
/// pair gets weight exactly 1.
pub fn compute_edge_weights(graph: &Graph, points: &PointCloud) -> Result<Graph> {
    if graph.directed_edge_count() == 0 {
        return Err(Error::InvalidInput("graph has no edges to weight".into()));
    }
    if graph.node_count() != points.len() {
        return Err(Error::InvalidInput(format!(
            "graph has {} nodes but the cloud has {} points",
            graph.node_count(),
            points.len()
        )));
    }
    let mut raw = Vec::with_capacity(graph.directed_edge_count());
    for &(u, v) in graph.edges() {
        let dist = points.dist(u, v);
        if dist == 0.0 {
            return Err(Error::InvalidInput(format!("edge ({u}, {v}) joins coincident points")));
        }
        raw.push(1.0 / dist);
    }
    let max = raw.iter().cloned().fold(0.0, f64::max);
    Ok(graph.with_weights(raw.into_iter().map(|w| w / max).collect()))
}
