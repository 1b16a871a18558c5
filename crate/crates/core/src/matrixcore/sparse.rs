//! Sparse matrix in coordinate (triplet) format.

use super::{DenseMatrix, MatrixError};

/// Sparse matrix stored as `(row, col, value)` triplets.
///
/// Triplets are kept in canonical row-major order, indices are unique and
/// in range, and stored values are finite and nonzero. Zeros are never
/// stored.
#[derive(Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    triplets: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    /// Builds a sparse matrix, sorting triplets into canonical order.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self, MatrixError> {
        for &(row, col, value) in &triplets {
            if row >= rows || col >= cols {
                return Err(MatrixError::IndexOutOfRange {
                    row,
                    col,
                    rows,
                    cols,
                });
            }
            if !value.is_finite() {
                return Err(MatrixError::NonFinite { row, col, value });
            }
            if value == 0.0 {
                return Err(MatrixError::ZeroTriplet { row, col });
            }
        }
        triplets.sort_by_key(|&(row, col, _)| (row, col));
        for pair in triplets.windows(2) {
            if pair[0].0 == pair[1].0 && pair[0].1 == pair[1].1 {
                return Err(MatrixError::DuplicateTriplet {
                    row: pair[0].0,
                    col: pair[0].1,
                });
            }
        }
        Ok(Self {
            rows,
            cols,
            triplets,
        })
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            triplets: Vec::new(),
        }
    }

    /// Collects every nonzero entry of a dense matrix.
    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut triplets = Vec::new();
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                let v = m.get(i, j);
                if v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        Self {
            rows: m.rows(),
            cols: m.cols(),
            triplets,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Stored entry count.
    pub fn nnz(&self) -> usize {
        self.triplets.len()
    }

    /// Triplets in canonical row-major order.
    pub fn triplets(&self) -> &[(usize, usize, f64)] {
        &self.triplets
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for &(i, j, v) in &self.triplets {
            out.set(i, j, v);
        }
        out
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "mul_vec length mismatch");
        let mut out = vec![0.0; self.rows];
        for &(i, j, v) in &self.triplets {
            out[i] += v * x[j];
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.triplets
            .iter()
            .map(|&(_, _, v)| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

impl std::fmt::Debug for SparseMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "SparseMatrix({}x{}, nnz={})",
            self.rows, self.cols, self.nnz()
        )
    }
}
