use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::Graph;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Hop distances from every node to a set of anchor nodes, scaled by the
/// largest finite hop distance. Unreachable pairs are set to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorEmbedding {
    /// n × anchors
    pub h: Tensor,
    pub anchor_ids: Vec<usize>,
    pub seed: u64,
}

/// `ceil(log2 n)`, the anchor count used by the bundled presets.
pub fn default_anchor_count(n: usize) -> usize {
    (usize::BITS - (n.max(2) - 1).leading_zeros()) as usize
}

pub fn anchor_embeddings(graph: &Graph, alpha_anchors: usize, seed: u64) -> Result<AnchorEmbedding> {
    let n = graph.node_count();
    if alpha_anchors < 1 || alpha_anchors > n {
        return Err(Error::InvalidParameter(format!("anchor count must be in 1..={n}, got {alpha_anchors}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids = rand::seq::index::sample(&mut rng, n, alpha_anchors).into_vec();
    let mut emb = anchor_embeddings_from(graph, &ids)?;
    emb.seed = seed;
    Ok(emb)
}

/// Embedding for an explicit anchor list.
pub fn anchor_embeddings_from(graph: &Graph, anchor_ids: &[usize]) -> Result<AnchorEmbedding> {
    let n = graph.node_count();
    if anchor_ids.is_empty() {
        return Err(Error::InvalidParameter("at least one anchor is required".into()));
    }
    if let Some(&bad) = anchor_ids.iter().find(|&&a| a >= n) {
        return Err(Error::InvalidParameter(format!("anchor {bad} out of range for {n} nodes")));
    }
    let a = anchor_ids.len();
    let mut hops = vec![usize::MAX; n * a];
    let mut queue = VecDeque::new();
    for (j, &src) in anchor_ids.iter().enumerate() {
        hops[src * a + j] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let next = hops[u * a + j] + 1;
            for v in graph.neighbors(u) {
                if hops[v * a + j] == usize::MAX {
                    hops[v * a + j] = next;
                    queue.push_back(v);
                }
            }
        }
    }
    let max_finite = hops.iter().filter(|&&h| h != usize::MAX).copied().max().unwrap_or(0);
    let scale = if max_finite == 0 { 1.0 } else { max_finite as f64 };
    let data = hops.iter().map(|&h| if h == usize::MAX { 1.0 } else { h as f64 / scale }).collect();
    Ok(AnchorEmbedding { h: Tensor::new(&[n, a], data)?, anchor_ids: anchor_ids.to_vec(), seed: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_graph() {
        let g = Graph::from_directed(3, [(0, 1), (1, 2)]).unwrap();
        let e = anchor_embeddings_from(&g, &[0]).unwrap();
        assert_eq!(e.h.data(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn complete_graph() {
        let pairs: Vec<_> = (0..5).flat_map(|u| (0..5).map(move |v| (u, v))).collect();
        let g = Graph::from_directed(5, pairs).unwrap();
        let e = anchor_embeddings_from(&g, &[2]).unwrap();
        assert_eq!(e.h.data(), &[1.0, 1.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn unreachable_maps_to_one() {
        let g = Graph::from_directed(4, [(0, 1), (2, 3)]).unwrap();
        let e = anchor_embeddings_from(&g, &[0]).unwrap();
        assert_eq!(e.h.data(), &[0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn too_many_anchors() {
        let g = Graph::from_directed(3, [(0, 1), (1, 2)]).unwrap();
        assert!(matches!(anchor_embeddings(&g, 4, 0), Err(Error::InvalidParameter(_))));
        let a = anchor_embeddings(&g, 2, 11).unwrap();
        let b = anchor_embeddings(&g, 2, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn anchor_count_is_ceil_log2() {
        assert_eq!(default_anchor_count(400), 9);
        assert_eq!(default_anchor_count(512), 9);
        assert_eq!(default_anchor_count(513), 10);
        assert_eq!(default_anchor_count(3977), 12);
    }
}
