use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Symmetric degree-normalized Laplacian `I - D^{-1/2} A D^{-1/2}` in CSR form.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseLaplacian {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    weighted: bool,
}

/// Assemble the normalized Laplacian. With `weighted`, `A[u][v] = w_uv`
/// (edge weights must be present); otherwise `A` is binary.
pub fn normalized_laplacian(graph: &Graph, weighted: bool) -> Result<SparseLaplacian> {
    let n = graph.node_count();
    let weights = if weighted {
        Some(graph.weights().ok_or_else(|| {
            Error::InvalidParameter("weighted Laplacian requested but the graph has no edge weights".into())
        })?)
    } else {
        None
    };
    let adj = |k: usize| weights.map_or(1.0, |w| w[k]);

    let mut inv_sqrt = vec![0.0; n];
    for (u, s) in inv_sqrt.iter_mut().enumerate() {
        let deg: f64 = graph.edge_range(u).map(adj).sum();
        if deg <= 0.0 {
            return Err(Error::DegenerateGraph { node: u });
        }
        *s = 1.0 / deg.sqrt();
    }

    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(graph.directed_edge_count() + n);
    let mut values = Vec::with_capacity(graph.directed_edge_count() + n);
    row_ptr.push(0);
    for u in 0..n {
        let mut diag_done = false;
        for k in graph.edge_range(u) {
            let v = graph.edges()[k].1;
            if !diag_done && v > u {
                col_idx.push(u);
                values.push(1.0);
                diag_done = true;
            }
            col_idx.push(v);
            values.push(-adj(k) * (inv_sqrt[u] * inv_sqrt[v]));
        }
        if !diag_done {
            col_idx.push(u);
            values.push(1.0);
        }
        row_ptr.push(col_idx.len());
    }
    Ok(SparseLaplacian { n, row_ptr, col_idx, values, weighted })
}

impl SparseLaplacian {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_weighted(&self) -> bool {
        self.weighted
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Coordinate-format entries `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for (r, c, v) in self.triplets() {
            if r == c {
                d[r] = v;
            }
        }
        d
    }

    /// `y = L x` for one vector.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = s;
        }
    }

    /// `L X` for a column-major block.
    pub fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, x.ncols());
        for c in 0..x.ncols() {
            let xc = x.column(c);
            let mut oc = out.column_mut(c);
            for r in 0..self.n {
                let mut s = 0.0;
                for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                    s += self.values[k] * xc[self.col_idx[k]];
                }
                oc[r] = s;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }
}
