use std::sync::Arc;

use crate::autodiff::{Tensor, Value};
use crate::error::{Error, Result};
use crate::graph::{AnchorEmbedding, Graph, PointCloud};
use crate::spectral::EigenBasis;

/// Everything about one geometry that the forward pass reads: coordinates,
/// message-passing index lists, edge weights, the eigenbasis and the anchor
/// embedding. Built once per geometry and shared by all samples.
#[derive(Clone, Debug)]
pub struct GraphContext {
    pub(crate) n: usize,
    pub(crate) coords: Tensor,
    /// Message source `u` of directed edge `k`.
    pub(crate) src: Arc<[usize]>,
    /// Receiving node `v` of directed edge `k`.
    pub(crate) dst: Arc<[usize]>,
    pub(crate) edge_weight: Option<Tensor>,
    pub(crate) basis: Option<Tensor>,
    pub(crate) basis_t: Option<Tensor>,
    pub(crate) anchors: Option<Tensor>,
}

impl GraphContext {
    /// `graph` must carry edge weights if the spatial branch will be used.
    pub fn new(
        points: &PointCloud,
        graph: &Graph,
        basis: Option<&EigenBasis>,
        anchors: Option<&AnchorEmbedding>,
    ) -> Result<Self> {
        let n = points.len();
        if graph.node_count() != n {
            return Err(Error::shape("graph context", format!("{} points but {} graph nodes", n, graph.node_count())));
        }
        let d = points.dim();
        let coords = Tensor::new(&[n, d], points.coords().to_vec())?;
        let (dst, src): (Vec<usize>, Vec<usize>) = graph.edges().iter().copied().unzip();
        let edge_weight = graph.weights().map(|w| Tensor::column_vector(w));
        if let Some(b) = basis {
            if b.n() != n {
                return Err(Error::shape("graph context", format!("basis has {} rows, expected {n}", b.n())));
            }
        }
        if let Some(h) = anchors {
            if h.h.rows() != n {
                return Err(Error::shape("graph context", format!("anchor embedding has {} rows, expected {n}", h.h.rows())));
            }
        }
        Ok(GraphContext {
            n,
            coords,
            src: src.into(),
            dst: dst.into(),
            edge_weight,
            basis: basis.map(|b| b.q.clone()),
            basis_t: basis.map(|b| b.q.transpose()),
            anchors: anchors.map(|h| h.h.clone()),
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.src.len()
    }

    pub fn mode_count(&self) -> Option<usize> {
        self.basis.as_ref().map(|q| q.cols())
    }

    pub fn anchor_count(&self) -> Option<usize> {
        self.anchors.as_ref().map(|h| h.cols())
    }

    /// Replaces the eigenbasis, e.g. with a rotated basis of the same span.
    pub fn with_basis(mut self, basis: Option<&EigenBasis>) -> Self {
        self.basis = basis.map(|b| b.q.clone());
        self.basis_t = basis.map(|b| b.q.transpose());
        self
    }

    /// Replaces the edge weights (same edge order as the graph).
    pub fn with_edge_weights(mut self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.src.len() {
            return Err(Error::shape("graph context", format!("{} weights for {} edges", weights.len(), self.src.len())));
        }
        self.edge_weight = Some(Tensor::column_vector(weights));
        Ok(self)
    }
}

/// Per-tape view of a [`GraphContext`]: constants already placed on the tape
/// and the edge gates of every block, which depend only on the graph and the
/// parameters and can be reused by all samples of a batch.
#[derive(Clone, Debug)]
pub struct TapeContext {
    pub(crate) coords: Value,
    pub(crate) basis: Option<Value>,
    pub(crate) basis_t: Option<Value>,
    pub(crate) gates: Vec<Option<Value>>,
}

impl TapeContext {
    /// Edge gates of block `t`, if that block has a spatial branch.
    pub fn gate(&self, t: usize) -> Option<Value> {
        self.gates.get(t).copied().flatten()
    }

    /// Replaces the gates of block `t` (test hook).
    pub fn override_gate(&mut self, t: usize, gates: Value) {
        self.gates[t] = Some(gates);
    }
}
