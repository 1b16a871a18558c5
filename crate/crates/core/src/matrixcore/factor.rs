//! Thin QR, truncated SVD and Moore-Penrose pseudoinverse.

use nalgebra::DMatrix;

use super::{DenseMatrix, MatrixError};

/// Thin QR factorization `M = Q R` of a tall matrix (rows >= cols).
///
/// `Q` has orthonormal columns and `R` is upper triangular with a
/// nonnegative diagonal, which makes the factorization unique for
/// full-rank input and the output deterministic.
pub fn qr_thin(m: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix), MatrixError> {
    if m.rows() < m.cols() {
        return Err(MatrixError::NotTall {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let qr = m.inner().clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for j in 0..r.nrows() {
        if r[(j, j)] < 0.0 {
            for i in 0..q.nrows() {
                q[(i, j)] = -q[(i, j)];
            }
            for k in 0..r.ncols() {
                r[(j, k)] = -r[(j, k)];
            }
        }
    }
    Ok((DenseMatrix::from_inner(q), DenseMatrix::from_inner(r)))
}

/// Leading factors of a singular value decomposition.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    /// Left singular vectors, one column per retained value.
    pub u: DenseMatrix,
    /// Retained singular values, descending.
    pub singular_values: Vec<f64>,
    /// Right singular vectors, one row per retained value.
    pub vt: DenseMatrix,
}

impl TruncatedSvd {
    /// The rank-limited approximation `U diag(s) Vt`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut scaled = self.u.inner().clone();
        for (j, &s) in self.singular_values.iter().enumerate() {
            for i in 0..scaled.nrows() {
                scaled[(i, j)] *= s;
            }
        }
        DenseMatrix::from_inner(scaled * self.vt.inner())
    }
}

/// Best rank-`rank` factors of `m` by singular value decomposition.
///
/// Singular values are returned in descending order; requires
/// `1 <= rank <= min(rows, cols)`.
pub fn truncated_svd(m: &DenseMatrix, rank: usize) -> Result<TruncatedSvd, MatrixError> {
    let limit = m.rows().min(m.cols());
    if rank == 0 || rank > limit {
        return Err(MatrixError::RankOutOfRange {
            rank,
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let svd = m.inner().clone().svd(true, true);
    let u_full = svd.u.expect("left singular vectors requested");
    let vt_full = svd.v_t.expect("right singular vectors requested");
    let u = DMatrix::from_fn(m.rows(), rank, |i, j| u_full[(i, j)]);
    let vt = DMatrix::from_fn(rank, m.cols(), |i, j| vt_full[(i, j)]);
    let singular_values = svd.singular_values.iter().take(rank).copied().collect();
    Ok(TruncatedSvd {
        u: DenseMatrix::from_inner(u),
        singular_values,
        vt: DenseMatrix::from_inner(vt),
    })
}

/// All singular values of `m`, descending.
#[cfg(test)]
pub(crate) fn singular_values(m: &DenseMatrix) -> Vec<f64> {
    m.inner()
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect()
}

/// Moore-Penrose pseudoinverse via SVD.
///
/// Singular values below `rtol * sigma_max` with
/// `rtol = 1e-12 * max(rows, cols)` are treated as zero.
pub fn pseudoinverse(m: &DenseMatrix) -> Result<DenseMatrix, MatrixError> {
    let svd = m.inner().clone().svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let vt = svd.v_t.expect("right singular vectors requested");
    let sigma_max = svd.singular_values.iter().fold(0.0f64, |a, &b| a.max(b));
    let cutoff = 1e-12 * m.rows().max(m.cols()) as f64 * sigma_max;
    // V diag(1/sigma) U^T, dropping directions at or below the cutoff.
    let mut v_scaled = vt.transpose();
    for (j, &s) in svd.singular_values.iter().enumerate() {
        let inv = if s > cutoff { 1.0 / s } else { 0.0 };
        for i in 0..v_scaled.nrows() {
            v_scaled[(i, j)] *= inv;
        }
    }
    Ok(DenseMatrix::from_inner(v_scaled * u.transpose()))
}
