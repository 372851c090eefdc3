//! Dense least-squares helpers backed by nalgebra's SVD.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Singular values below `RANK_RTOL * sigma_max` are treated as zero.
pub const RANK_RTOL: f64 = 1e-10;

/// Moore-Penrose pseudo-inverse with the relative rank cutoff, plus the
/// numerical rank.
pub fn pseudo_inverse(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, usize)> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Ok((DMatrix::zeros(n, m), 0));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if !smax.is_finite() {
        return Err(Error::Numeric("non-finite matrix passed to SVD".into()));
    }
    let eps = RANK_RTOL * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    if rank == 0 {
        return Ok((DMatrix::zeros(n, m), 0));
    }
    let pinv = svd
        .pseudo_inverse(eps)
        .map_err(|e| Error::Numeric(e.to_string()))?;
    Ok((pinv, rank))
}

/// Minimum-norm solution of `min ||A x - b||_2`, plus the numerical rank of `A`.
pub fn min_norm_lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, usize)> {
    let (pinv, rank) = pseudo_inverse(a)?;
    Ok((pinv * b, rank))
}
