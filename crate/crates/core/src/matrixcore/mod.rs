//! Matrix types and numerical kernels.
//!
//! Everything downstream works in `f64` on two representations: a dense
//! row-major matrix and a coordinate-format sparse matrix. The kernels here
//! (thin QR, truncated SVD, pseudoinverse, shrinkage, cardinality
//! projection) are the only places the crate touches factorization code.

mod dense;
mod factor;
mod sparse;
mod threshold;

pub use dense::DenseMatrix;
pub use factor::{pseudoinverse, qr_thin, truncated_svd, TruncatedSvd};
pub use sparse::SparseMatrix;
pub use threshold::{soft_threshold, top_q_project};
pub(crate) use threshold::shrink;
#[cfg(test)]
pub(crate) use factor::singular_values;

/// Errors raised by matrix constructors and kernels.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MatrixError {
    #[error("data length {len} does not match a {rows}x{cols} matrix")]
    DataLength { rows: usize, cols: usize, len: usize },
    #[error("non-finite entry {value} at ({row}, {col})")]
    NonFinite { row: usize, col: usize, value: f64 },
    #[error("thin QR requires rows >= cols, got {rows}x{cols}")]
    NotTall { rows: usize, cols: usize },
    #[error("rank {rank} out of range for a {rows}x{cols} matrix")]
    RankOutOfRange { rank: usize, rows: usize, cols: usize },
    #[error("shrinkage threshold must be finite and nonnegative, got {0}")]
    NegativeThreshold(f64),
    #[error("triplet index ({row}, {col}) outside a {rows}x{cols} matrix")]
    IndexOutOfRange { row: usize, col: usize, rows: usize, cols: usize },
    #[error("duplicate triplet at ({row}, {col})")]
    DuplicateTriplet { row: usize, col: usize },
    #[error("stored sparse value at ({row}, {col}) must be nonzero")]
    ZeroTriplet { row: usize, col: usize },
}
