//! Block eigensolver for the extremal eigenpairs of a sparse symmetric
//! matrix (LOBPCG). Each iteration performs Rayleigh–Ritz on the span of
//! the current iterate `X`, the (preconditioned) residuals `W`, and the
//! previous search directions `P`, after orthonormalizing that span.
//! Columns whose residual is already below tolerance are soft-locked:
//! they stay in `X` but contribute no new `W`/`P` directions.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::basis::{fix_signs, EigenBasis, ModeSelection};
use super::laplacian::SparseLaplacian;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    #[default]
    Identity,
    Jacobi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LobpcgOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub preconditioner: Preconditioner,
    pub selection: ModeSelection,
    /// Extra block columns beyond `m`; they speed up convergence of the
    /// last wanted pairs and are discarded at the end.
    pub guard: Option<usize>,
}

impl Default for LobpcgOptions {
    fn default() -> Self {
        LobpcgOptions {
            tol: 1e-9,
            max_iter: 3000,
            seed: 0,
            preconditioner: Preconditioner::Identity,
            selection: ModeSelection::Smallest,
            guard: None,
        }
    }
}

/// Converged basis plus the per-pair residual norms and iteration count.
#[derive(Clone, Debug)]
pub struct LobpcgResult {
    pub basis: EigenBasis,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// The `m` smallest eigenpairs of `l` with default options except the
/// given tolerance, iteration cap, and seed.
pub fn lobpcg_smallest(l: &SparseLaplacian, m: usize, tol: f64, max_iter: usize, seed: u64) -> Result<EigenBasis> {
    let opts = LobpcgOptions { tol, max_iter, seed, ..LobpcgOptions::default() };
    lobpcg(l, m, &opts).map(|r| r.basis)
}

/// Orthonormalize the columns of `s` in place (two passes of modified
/// Gram–Schmidt), dropping columns that are numerically dependent.
/// Returns the kept column indices.
fn orthonormalize(s: &mut DMatrix<f64>) -> Vec<usize> {
    let k = s.ncols();
    let mut kept: Vec<usize> = Vec::with_capacity(k);
    for j in 0..k {
        let orig = s.column(j).norm();
        if orig == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for &i in &kept {
                let proj = s.column(i).dot(&s.column(j));
                let ci = s.column(i).clone_owned();
                s.column_mut(j).axpy(-proj, &ci, 1.0);
            }
        }
        let nrm = s.column(j).norm();
        if nrm > 1e-10 * orig && nrm > 1e-300 {
            s.column_mut(j).unscale_mut(nrm);
            kept.push(j);
        }
    }
    kept
}

pub fn lobpcg(l: &SparseLaplacian, m: usize, opts: &LobpcgOptions) -> Result<LobpcgResult> {
    let n = l.dim();
    if m < 1 || 4 * m > n {
        return Err(Error::InvalidParameter(format!("mode count must satisfy 1 <= m <= n/4 (n = {n}), got {m}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let guard = opts.guard.unwrap_or_else(|| m.clamp(4, 32));
    let b = (m + guard).min(n / 3).max(m);
    let sign = match opts.selection {
        ModeSelection::Smallest => 1.0,
        ModeSelection::Largest => -1.0,
    };
    let apply = |x: &DMatrix<f64>| -> DMatrix<f64> {
        let mut y = l.apply_block(x);
        if sign < 0.0 {
            y.neg_mut();
        }
        y
    };
    let inv_diag: Vec<f64> = l.diagonal().iter().map(|&d| if d.abs() > 0.0 { 1.0 / d.abs() } else { 1.0 }).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = DMatrix::from_fn(n, b, |_, _| rng.gen_range(-1.0..1.0));
    orthonormalize(&mut x);
    let mut ax = apply(&x);
    let (mut lambda, rot) = rayleigh_ritz(&x, &ax, b);
    x = &x * &rot;
    ax = &ax * &rot;
    let mut p: Option<(DMatrix<f64>, DMatrix<f64>)> = None;
    let mut residuals = vec![f64::INFINITY; b];

    for iter in 0..opts.max_iter {
        let mut r = &ax - &x * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lambda.clone()));
        for j in 0..b {
            residuals[j] = r.column(j).norm();
        }
        let converged = |j: usize| residuals[j] <= opts.tol * lambda[j].abs().max(1.0);
        if (0..m).all(converged) {
            return Ok(finish(x, lambda, residuals, m, iter, sign, opts.selection));
        }
        let active: Vec<usize> = (0..b).filter(|&j| !converged(j)).collect();

        if opts.preconditioner == Preconditioner::Jacobi {
            for j in 0..b {
                for i in 0..n {
                    r[(i, j)] *= inv_diag[i];
                }
            }
        }
        let w = r.select_columns(&active);
        let mut blocks = vec![x.clone(), w];
        if let Some((pp, _)) = &p {
            let cols: Vec<usize> = active.iter().copied().filter(|&j| j < pp.ncols()).collect();
            if !cols.is_empty() {
                blocks.push(pp.select_columns(&cols));
            }
        }
        let total: usize = blocks.iter().map(|m| m.ncols()).sum();
        let mut s = DMatrix::zeros(n, total);
        let mut off = 0;
        for blk in &blocks {
            s.columns_mut(off, blk.ncols()).copy_from(blk);
            off += blk.ncols();
        }
        let kept = orthonormalize(&mut s);
        let s = s.select_columns(&kept);
        let as_ = apply(&s);
        let (lam, c) = rayleigh_ritz(&s, &as_, b);
        // Part of the new iterate that came from the W and P directions.
        let n_x = kept.iter().take_while(|&&j| j < b).count();
        let k = s.ncols();
        let c_rest = c.rows(n_x, k - n_x).into_owned();
        let s_rest = s.columns(n_x, k - n_x);
        let as_rest = as_.columns(n_x, k - n_x);
        p = Some((s_rest * &c_rest, as_rest * &c_rest));
        x = &s * &c;
        ax = &as_ * &c;
        lambda = lam;
    }
    let worst = residuals[..m].iter().cloned().fold(0.0, f64::max);
    Err(Error::ConvergenceFailure { iterations: opts.max_iter, worst_residual: worst })
}

/// Ritz pairs of `A` on the span of orthonormal `s`: the `b` smallest Ritz
/// values and the coefficient matrix mapping `s` onto their vectors.
fn rayleigh_ritz(s: &DMatrix<f64>, as_: &DMatrix<f64>, b: usize) -> (Vec<f64>, DMatrix<f64>) {
    let g = s.transpose() * as_;
    let g = (&g + g.transpose()) * 0.5;
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[c]));
    order.truncate(b);
    let lambda = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    (lambda, eig.eigenvectors.select_columns(&order))
}

fn finish(
    x: DMatrix<f64>,
    lambda: Vec<f64>,
    residuals: Vec<f64>,
    m: usize,
    iterations: usize,
    sign: f64,
    selection: ModeSelection,
) -> LobpcgResult {
    let mut idx: Vec<usize> = (0..m).collect();
    let mut vecs;
    let sigma: Vec<f64>;
    if sign < 0.0 {
        // Largest pairs of L came out as smallest of -L; report ascending.
        idx.reverse();
        vecs = x.select_columns(&idx);
        sigma = idx.iter().map(|&j| -lambda[j]).collect();
    } else {
        vecs = x.select_columns(&idx);
        sigma = lambda[..m].to_vec();
    }
    fix_signs(&mut vecs);
    let res = idx.iter().map(|&j| residuals[j]).collect();
    LobpcgResult { basis: EigenBasis::from_columns(&vecs, sigma, selection), residuals: res, iterations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::spectral::normalized_laplacian;

    fn cycle(n: usize) -> Graph {
        Graph::from_directed(n, (0..n).map(|i| (i, (i + 1) % n))).unwrap()
    }

    #[test]
    fn rejects_large_m() {
        let l = normalized_laplacian(&cycle(8), false).unwrap();
        assert!(matches!(lobpcg_smallest(&l, 3, 1e-8, 100, 0), Err(Error::InvalidParameter(_))));
        assert!(lobpcg_smallest(&l, 0, 1e-8, 100, 0).is_err());
    }

    #[test]
    fn reports_non_convergence() {
        let l = normalized_laplacian(&cycle(64), false).unwrap();
        let err = lobpcg_smallest(&l, 4, 1e-12, 1, 0).unwrap_err();
        assert!(matches!(err, Error::ConvergenceFailure { iterations: 1, .. }));
    }

    #[test]
    fn cycle_spectrum() {
        // normalized Laplacian of C_n: 1 - cos(2πk/n)
        let n = 40;
        let l = normalized_laplacian(&cycle(n), false).unwrap();
        let b = lobpcg_smallest(&l, 1, 1e-10, 500, 3).unwrap();
        assert!(b.sigma[0].abs() < 1e-12);
        let q0 = b.q.data();
        for &v in q0 {
            assert!((v - 1.0 / (n as f64).sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn largest_variant_matches_closed_form() {
        let n = 40;
        let l = normalized_laplacian(&cycle(n), false).unwrap();
        let opts = LobpcgOptions { selection: ModeSelection::Largest, tol: 1e-10, ..Default::default() };
        let r = lobpcg(&l, 1, &opts).unwrap();
        assert!((r.basis.sigma[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn jacobi_preconditioner_converges() {
        let n = 48;
        let l = normalized_laplacian(&cycle(n), false).unwrap();
        let opts = LobpcgOptions { preconditioner: Preconditioner::Jacobi, ..Default::default() };
        let r = lobpcg(&l, 3, &opts).unwrap();
        let expect = [0.0, 1.0 - (2.0 * std::f64::consts::PI / n as f64).cos()];
        assert!(r.basis.sigma[0].abs() < 1e-12);
        assert!((r.basis.sigma[1] - expect[1]).abs() < 1e-12);
        assert!((r.basis.sigma[2] - expect[1]).abs() < 1e-12);
    }
}
