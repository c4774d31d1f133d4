use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Which end of the spectrum a basis was taken from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSelection {
    #[default]
    Smallest,
    Largest,
}

/// `m` eigenpairs of a normalized Laplacian: column-orthonormal `q`
/// (n×m, row-major) and eigenvalues in ascending order.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenBasis {
    pub q: Tensor,
    pub sigma: Vec<f64>,
    pub selection: ModeSelection,
}

impl EigenBasis {
    pub fn new(q: Tensor, sigma: Vec<f64>, selection: ModeSelection) -> Result<Self> {
        if !q.is_matrix() || q.cols() != sigma.len() {
            return Err(Error::shape("eigen_basis", format!("{:?} with {} eigenvalues", q.shape(), sigma.len())));
        }
        Ok(EigenBasis { q, sigma, selection })
    }

    pub(crate) fn from_columns(vectors: &DMatrix<f64>, sigma: Vec<f64>, selection: ModeSelection) -> Self {
        let (n, m) = vectors.shape();
        let mut q = Tensor::zeros(&[n, m]);
        for i in 0..n {
            for j in 0..m {
                q.set(i, j, vectors[(i, j)]);
            }
        }
        EigenBasis { q, sigma, selection }
    }

    pub fn n(&self) -> usize {
        self.q.rows()
    }

    pub fn m(&self) -> usize {
        self.q.cols()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n(), self.m(), self.q.data())
    }

    /// Graph Fourier transform `Qᵀ v` for an n×d signal.
    pub fn gft(&self, v: &Tensor) -> Result<Tensor> {
        if !v.is_matrix() || v.rows() != self.n() {
            return Err(Error::shape("gft", format!("signal {:?} on {} nodes", v.shape(), self.n())));
        }
        self.q.transpose().matmul(v)
    }

    /// Inverse transform `Q c` for an m×d coefficient block.
    pub fn igft(&self, c: &Tensor) -> Result<Tensor> {
        if !c.is_matrix() || c.rows() != self.m() {
            return Err(Error::shape("igft", format!("coefficients {:?} for {} modes", c.shape(), self.m())));
        }
        self.q.matmul(c)
    }

    /// Largest `|QᵀQ - I|` entry.
    pub fn orthonormality_error(&self) -> f64 {
        let q = self.to_matrix();
        let g = q.transpose() * &q;
        let mut worst: f64 = 0.0;
        for i in 0..self.m() {
            for j in 0..self.m() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// Row-permuted basis: old node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> EigenBasis {
        let mut q = Tensor::zeros(&[self.n(), self.m()]);
        for (old, &new) in perm.iter().enumerate() {
            q.row_mut(new).copy_from_slice(self.q.row(old));
        }
        EigenBasis { q, sigma: self.sigma.clone(), selection: self.selection }
    }
}

/// Flip each column so its largest-magnitude entry (first on ties) is positive.
pub(crate) fn fix_signs(v: &mut DMatrix<f64>) {
    for j in 0..v.ncols() {
        let mut best = 0;
        for i in 1..v.nrows() {
            if v[(i, j)].abs() > v[(best, j)].abs() {
                best = i;
            }
        }
        if v[(best, j)] < 0.0 {
            v.column_mut(j).neg_mut();
        }
    }
}

/// Sine of the largest principal angle between the column spans of two
/// orthonormal n×m bases.
pub fn subspace_distance(a: &EigenBasis, b: &EigenBasis) -> f64 {
    let qa = a.to_matrix();
    let qb = b.to_matrix();
    let resid = &qa - &qb * (qb.transpose() * &qa);
    resid.singular_values().iter().cloned().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_orthonormal(n: usize, m: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, m, |i, j| ((i * 7 + j * 13) % 11) as f64 - 5.0 + 0.1 * (i as f64).sin());
        a.qr().q()
    }

    #[test]
    fn gft_of_basis_vector_is_unit() {
        let q = random_orthonormal(8, 3);
        let b = EigenBasis::from_columns(&q, vec![0.0, 0.1, 0.2], ModeSelection::Smallest);
        let col0 = Tensor::column_vector(&q.column(0).iter().cloned().collect::<Vec<_>>());
        let c = b.gft(&col0).unwrap();
        assert!((c.data()[0] - 1.0).abs() < 1e-14);
        assert!(c.data()[1].abs() < 1e-14 && c.data()[2].abs() < 1e-14);
    }

    #[test]
    fn full_basis_is_complete() {
        let q = random_orthonormal(6, 6);
        let b = EigenBasis::from_columns(&q, vec![0.0; 6], ModeSelection::Smallest);
        let v = Tensor::new(&[6, 2], (0..12).map(|i| (i as f64).cos()).collect()).unwrap();
        let back = b.igft(&b.gft(&v).unwrap()).unwrap();
        assert!(back.max_abs_diff(&v) < 1e-10);
    }

    #[test]
    fn shape_mismatch() {
        let q = random_orthonormal(6, 2);
        let b = EigenBasis::from_columns(&q, vec![0.0; 2], ModeSelection::Smallest);
        assert!(b.gft(&Tensor::zeros(&[5, 1])).is_err());
        assert!(b.igft(&Tensor::zeros(&[3, 1])).is_err());
    }
}
