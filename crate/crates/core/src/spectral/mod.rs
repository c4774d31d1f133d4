//! Normalized graph Laplacian, LOBPCG for its extremal eigenpairs, a dense
//! reference solver, and the graph Fourier transform.

mod basis;
mod dense;
mod laplacian;
mod lobpcg;

pub use basis::{subspace_distance, EigenBasis, ModeSelection};
pub use dense::{dense_eigen_reference, dense_eigen_select, DENSE_LIMIT};
pub use laplacian::{normalized_laplacian, SparseLaplacian};
pub use lobpcg::{lobpcg, lobpcg_smallest, LobpcgOptions, LobpcgResult, Preconditioner};
