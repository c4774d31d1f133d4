use nalgebra::SymmetricEigen;

use super::basis::{fix_signs, EigenBasis, ModeSelection};
use super::laplacian::SparseLaplacian;
use crate::error::{Error, Result};

/// Largest dimension the dense reference accepts.
pub const DENSE_LIMIT: usize = 2000;

/// Full symmetric eigendecomposition; keeps the `m` smallest (or largest) pairs.
pub fn dense_eigen_reference(l: &SparseLaplacian, m: usize) -> Result<EigenBasis> {
    dense_eigen_select(l, m, ModeSelection::Smallest)
}

pub fn dense_eigen_select(l: &SparseLaplacian, m: usize, which: ModeSelection) -> Result<EigenBasis> {
    let n = l.dim();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge(format!(
            "dense eigensolver limited to n <= {DENSE_LIMIT} (got {n}); use lobpcg_smallest"
        )));
    }
    if m < 1 || m > n {
        return Err(Error::InvalidParameter(format!("mode count must be in 1..={n}, got {m}")));
    }
    let eig = SymmetricEigen::new(l.to_dense());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let picked: Vec<usize> = match which {
        ModeSelection::Smallest => order[..m].to_vec(),
        ModeSelection::Largest => order[n - m..].to_vec(),
    };
    let mut vecs = eig.eigenvectors.select_columns(&picked);
    fix_signs(&mut vecs);
    let sigma = picked.iter().map(|&i| eig.eigenvalues[i]).collect();
    Ok(EigenBasis::from_columns(&vecs, sigma, which))
}
