use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Undirected graph stored as a sorted, symmetric list of directed pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    weights: Option<Vec<f64>>,
}

/// Undirected edge count and degree distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeStats {
    pub edge_count: usize,
    pub min_degree: usize,
    pub max_degree: usize,
    pub isolated: usize,
    /// degree -> node count
    pub histogram: BTreeMap<usize, usize>,
}

impl Graph {
    /// Symmetrize `pairs` by union, dropping self-loops and duplicates.
    pub fn from_directed(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut edges = Vec::new();
        for (u, v) in pairs {
            if u >= n || v >= n {
                return Err(Error::InvalidInput(format!("edge ({u}, {v}) out of range for {n} nodes")));
            }
            if u != v {
                edges.push((u, v));
                edges.push((v, u));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(Self::from_sorted(n, edges, None))
    }

    fn from_sorted(n: usize, edges: Vec<(usize, usize)>, weights: Option<Vec<f64>>) -> Self {
        let mut offsets = vec![0; n + 1];
        for &(u, _) in &edges {
            offsets[u + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        Graph { n, edges, offsets, weights }
    }

    /// Rebuild from serialized directed pairs, checking every structural invariant.
    pub fn from_parts(n: usize, edges: Vec<(usize, usize)>, weights: Option<Vec<f64>>) -> Result<Self> {
        if let Some(w) = &weights {
            if w.len() != edges.len() {
                return Err(Error::Format(format!("{} weights for {} edges", w.len(), edges.len())));
            }
        }
        let mut order: Vec<usize> = (0..edges.len()).collect();
        order.sort_by_key(|&i| edges[i]);
        let sorted: Vec<_> = order.iter().map(|&i| edges[i]).collect();
        let w = weights.map(|w| order.iter().map(|&i| w[i]).collect());
        let g = Self::from_sorted(n, sorted, w);
        g.validate()?;
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Directed pairs; each undirected edge appears in both orientations.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn directed_edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn undirected_edge_count(&self) -> usize {
        self.edges.len() / 2
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges[self.offsets[u]..self.offsets[u + 1]].iter().map(|&(_, v)| v)
    }

    /// Range of directed-edge positions leaving `u`.
    pub fn edge_range(&self, u: usize) -> std::ops::Range<usize> {
        self.offsets[u]..self.offsets[u + 1]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn isolated_nodes(&self) -> Vec<usize> {
        (0..self.n).filter(|&u| self.degree(u) == 0).collect()
    }

    pub(crate) fn with_weights(&self, weights: Vec<f64>) -> Graph {
        Graph { weights: Some(weights), ..self.clone() }
    }

    /// Checks symmetry, absence of self-loops and duplicates, and weight range.
    pub fn validate(&self) -> Result<()> {
        for w in self.edges.windows(2) {
            if w[0] == w[1] {
                return Err(Error::InvalidInput(format!("duplicate edge {:?}", w[0])));
            }
        }
        for (k, &(u, v)) in self.edges.iter().enumerate() {
            if u == v {
                return Err(Error::InvalidInput(format!("self-loop at {u}")));
            }
            if u >= self.n || v >= self.n {
                return Err(Error::InvalidInput(format!("edge ({u}, {v}) out of range")));
            }
            let Ok(back) = self.edges.binary_search(&(v, u)) else {
                return Err(Error::InvalidInput(format!("edge ({u}, {v}) has no reverse")));
            };
            if let Some(w) = &self.weights {
                if w[k] != w[back] {
                    return Err(Error::InvalidInput(format!("asymmetric weight on ({u}, {v})")));
                }
            }
        }
        if let Some(w) = &self.weights {
            if w.iter().any(|&x| !(x > 0.0 && x <= 1.0)) {
                return Err(Error::InvalidInput("edge weights must lie in (0, 1]".into()));
            }
            if !w.is_empty() && w.iter().cloned().fold(0.0, f64::max) != 1.0 {
                return Err(Error::InvalidInput("maximum edge weight must be exactly 1".into()));
            }
        }
        Ok(())
    }

    pub fn degree_stats(&self) -> DegreeStats {
        let mut histogram = BTreeMap::new();
        for u in 0..self.n {
            *histogram.entry(self.degree(u)).or_insert(0) += 1;
        }
        DegreeStats {
            edge_count: self.undirected_edge_count(),
            min_degree: histogram.keys().next().copied().unwrap_or(0),
            max_degree: histogram.keys().next_back().copied().unwrap_or(0),
            isolated: histogram.get(&0).copied().unwrap_or(0),
            histogram,
        }
    }

    /// Graph with nodes relabeled so old node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Graph {
        let mut pairs: Vec<((usize, usize), Option<f64>)> = self
            .edges
            .iter()
            .enumerate()
            .map(|(k, &(u, v))| ((perm[u], perm[v]), self.weights.as_ref().map(|w| w[k])))
            .collect();
        pairs.sort_by_key(|p| p.0);
        let weights = self.weights.as_ref().map(|_| pairs.iter().map(|p| p.1.unwrap()).collect());
        Self::from_sorted(self.n, pairs.into_iter().map(|p| p.0).collect(), weights)
    }

    /// SHA-256 over the node count, directed pairs (u32 LE), and weights as
    /// stored on disk (f32 LE), hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        h.update((self.edges.len() as u64).to_le_bytes());
        for &(u, v) in &self.edges {
            h.update((u as u32).to_le_bytes());
            h.update((v as u32).to_le_bytes());
        }
        if let Some(w) = &self.weights {
            for &x in w {
                h.update((x as f32).to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_stats() {
        let g = Graph::from_directed(3, [(0, 1), (1, 2), (2, 0)]).unwrap();
        let s = g.degree_stats();
        assert_eq!(s.edge_count, 3);
        assert_eq!((s.min_degree, s.max_degree), (2, 2));
        assert_eq!(s.histogram.get(&2), Some(&3));
        g.validate().unwrap();
    }

    #[test]
    fn union_symmetrization_dedups() {
        let g = Graph::from_directed(3, [(0, 1), (1, 0), (1, 1), (2, 1)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 0), (1, 2), (2, 1)]);
    }

    #[test]
    fn from_parts_rejects_missing_reverse() {
        assert!(Graph::from_parts(2, vec![(0, 1)], None).is_err());
        assert!(Graph::from_parts(2, vec![(1, 0), (0, 1)], Some(vec![1.0, 1.0])).is_ok());
        assert!(Graph::from_parts(2, vec![(1, 0), (0, 1)], Some(vec![0.5, 0.5])).is_err());
    }
}
