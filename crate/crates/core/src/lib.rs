//! Cross-layer compression of neural network weights into low-rank plus
//! sparse factors, with an optional group-shared right-factor block and a
//! depth-proximity similarity regularizer.
//!
//! The crate is organized by concern:
//!
//! - [`matrixcore`]: dense/sparse matrix types and the numerical kernels
//!   (thin QR, truncated SVD, pseudoinverse, shrinkage, cardinality
//!   projection) everything else is built on.
//! - [`layermodel`]: layer tensors, filter unrolling, depth chunking and
//!   cross-layer grouping policy.
//! - [`solver`]: the alternating solver producing per-layer factors
//!   `U`, `V = [V_common; V_individual]`, `S`.
//! - [`metrics`]: parameter accounting, compression rates, reconstruction
//!   errors and filter correspondence analysis.
//! - [`storage`]: the binary tensor container and the JSON report document.

pub mod layermodel;
pub mod matrixcore;
pub mod metrics;
pub mod solver;
pub mod storage;

pub use matrixcore::{DenseMatrix, SparseMatrix};
pub use solver::{Decomposition, GroupDecomposition, SolverConfig};
