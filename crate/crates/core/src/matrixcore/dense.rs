//! Dense row-major matrix of `f64` values.

use nalgebra::DMatrix;

use super::MatrixError;

/// Dense matrix with finite entries.
///
/// Constructors reject NaN and infinity, so downstream code can assume
/// every stored value is finite. Serialization order is row-major.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    inner: DMatrix<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major data.
    pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Result<Self, MatrixError> {
        if data.len() != rows * cols {
            return Err(MatrixError::DataLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        for (idx, &value) in data.iter().enumerate() {
            if !value.is_finite() {
                let col = if cols == 0 { 0 } else { idx % cols };
                let row = if cols == 0 { 0 } else { idx / cols };
                return Err(MatrixError::NonFinite { row, col, value });
            }
        }
        Ok(Self {
            inner: DMatrix::from_row_slice(rows, cols, data),
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            inner: DMatrix::zeros(rows, cols),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            inner: DMatrix::identity(n, n),
        }
    }

    pub(crate) fn from_inner(inner: DMatrix<f64>) -> Self {
        debug_assert!(inner.iter().all(|v| v.is_finite()));
        Self { inner }
    }

    pub(crate) fn inner(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.inner[(row, col)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(value.is_finite());
        self.inner[(row, col)] = value;
    }

    /// Entries in row-major order.
    pub fn row_major(&self) -> Vec<f64> {
        let (rows, cols) = (self.rows(), self.cols());
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                out.push(self.inner[(i, j)]);
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        Self {
            inner: self.inner.transpose(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.norm()
    }

    pub fn max_abs(&self) -> f64 {
        self.inner.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self::from_inner(&self.inner * factor)
    }

    /// Stacks `below` under `self`. Column counts must agree.
    pub fn vstack(&self, below: &Self) -> Self {
        assert_eq!(self.cols(), below.cols(), "vstack column mismatch");
        let rows = self.rows() + below.rows();
        let inner = DMatrix::from_fn(rows, self.cols(), |i, j| {
            if i < self.rows() {
                self.inner[(i, j)]
            } else {
                below.inner[(i - self.rows(), j)]
            }
        });
        Self { inner }
    }

    /// Copies rows `range.start..range.end` into a new matrix.
    pub fn row_slice(&self, range: std::ops::Range<usize>) -> Self {
        assert!(range.end <= self.rows(), "row range out of bounds");
        let inner = DMatrix::from_fn(range.len(), self.cols(), |i, j| {
            self.inner[(range.start + i, j)]
        });
        Self { inner }
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols(), "mul_vec length mismatch");
        let v = nalgebra::DVector::from_column_slice(x);
        (&self.inner * v).iter().copied().collect()
    }
}

impl std::fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "DenseMatrix({}x{})", self.rows(), self.cols())?;
        if self.rows() * self.cols() <= 36 {
            write!(f, " {:?}", self.row_major())?;
        }
        Ok(())
    }
}

impl std::ops::Add for &DenseMatrix {
    type Output = DenseMatrix;
    fn add(self, rhs: &DenseMatrix) -> DenseMatrix {
        DenseMatrix::from_inner(&self.inner + &rhs.inner)
    }
}

impl std::ops::Sub for &DenseMatrix {
    type Output = DenseMatrix;
    fn sub(self, rhs: &DenseMatrix) -> DenseMatrix {
        DenseMatrix::from_inner(&self.inner - &rhs.inner)
    }
}

impl std::ops::Mul for &DenseMatrix {
    type Output = DenseMatrix;
    fn mul(self, rhs: &DenseMatrix) -> DenseMatrix {
        DenseMatrix::from_inner(&self.inner * &rhs.inner)
    }
}
