//! Factorization results: one layer's factors and a group of them sharing a
//! common block.

use std::sync::Arc;

use crate::matrixcore::{DenseMatrix, SparseMatrix};

use super::{SolverConfig, SolverError};

/// One layer's factors: `W ~ U [V_common; V_individual] + S`.
///
/// The common block is reference-counted so every member of a group holds the
/// same storage, not a copy.
#[derive(Debug, Clone)]
pub struct Decomposition {
    layer: String,
    u: DenseMatrix,
    v_common: Arc<DenseMatrix>,
    v_individual: DenseMatrix,
    s: SparseMatrix,
}

impl Decomposition {
    /// Builds a decomposition after checking that the factor shapes agree.
    pub fn new(
        layer: &str,
        u: DenseMatrix,
        v_common: Arc<DenseMatrix>,
        v_individual: DenseMatrix,
        s: SparseMatrix,
    ) -> Result<Self, SolverError> {
        let p = v_individual.cols();
        if v_common.cols() != p {
            return Err(SolverError::FactorShape {
                layer: layer.to_owned(),
                reason: "common and individual blocks have different column counts",
            });
        }
        if u.cols() != v_common.rows() + v_individual.rows() {
            return Err(SolverError::FactorShape {
                layer: layer.to_owned(),
                reason: "left factor columns do not match total right-factor rows",
            });
        }
        if s.rows() != u.rows() || s.cols() != p {
            return Err(SolverError::FactorShape {
                layer: layer.to_owned(),
                reason: "sparse part shape does not match the reconstruction",
            });
        }
        Ok(Self {
            layer: layer.to_owned(),
            u,
            v_common,
            v_individual,
            s,
        })
    }

    /// Exact factors for a raw weight matrix: `U = I`, individual block `= W`,
    /// empty common block and sparse part. Useful as a baseline or fixture.
    pub fn identity_factors(layer: &str, weights: &DenseMatrix) -> Self {
        Self {
            layer: layer.to_owned(),
            u: DenseMatrix::identity(weights.rows()),
            v_common: Arc::new(DenseMatrix::zeros(0, weights.cols())),
            v_individual: weights.clone(),
            s: SparseMatrix::empty(weights.rows(), weights.cols()),
        }
    }

    pub fn layer(&self) -> &str {
        &self.layer
    }

    pub fn u(&self) -> &DenseMatrix {
        &self.u
    }

    pub fn v_common(&self) -> &DenseMatrix {
        &self.v_common
    }

    /// Shared handle to the common block.
    pub fn v_common_arc(&self) -> Arc<DenseMatrix> {
        Arc::clone(&self.v_common)
    }

    pub fn v_individual(&self) -> &DenseMatrix {
        &self.v_individual
    }

    pub fn s(&self) -> &SparseMatrix {
        &self.s
    }

    /// Rows of the common block.
    pub fn common_rank(&self) -> usize {
        self.v_common.rows()
    }

    /// Rows of the individual block.
    pub fn individual_rank(&self) -> usize {
        self.v_individual.rows()
    }

    /// Total rank of the low-rank part.
    pub fn rank(&self) -> usize {
        self.common_rank() + self.individual_rank()
    }

    /// Stored sparse entries.
    pub fn card(&self) -> usize {
        self.s.nnz()
    }

    /// Full right factor `[V_common; V_individual]`.
    pub fn v_full(&self) -> DenseMatrix {
        self.v_common.vstack(&self.v_individual)
    }

    /// Low-rank part `U [V_common; V_individual]`.
    pub fn low_rank(&self) -> DenseMatrix {
        &self.u * &self.v_full()
    }

    /// Full reconstruction `U [V_common; V_individual] + S`.
    pub fn reconstruct(&self) -> DenseMatrix {
        &self.low_rank() + &self.s.to_dense()
    }
}

/// Decompositions of a layer group with one shared common block.
#[derive(Debug, Clone)]
pub struct GroupDecomposition {
    members: Vec<Decomposition>,
    v_common: Arc<DenseMatrix>,
    objective_trace: Vec<(usize, f64)>,
    config: SolverConfig,
}

impl GroupDecomposition {
    /// Assembles a group from member decompositions.
    ///
    /// All members must carry value-identical common blocks and the same
    /// column count; the blocks are re-linked to a single shared handle.
    pub fn new(members: Vec<Decomposition>, config: SolverConfig) -> Result<Self, SolverError> {
        let first = members.first().ok_or(SolverError::EmptyGroup)?;
        let v_common = first.v_common_arc();
        let cols = first.v_individual.cols();
        for m in &members {
            if m.v_individual.cols() != cols {
                return Err(SolverError::ColumnMismatch {
                    expected: cols,
                    got: m.v_individual.cols(),
                });
            }
            if *m.v_common != *v_common {
                return Err(SolverError::FactorShape {
                    layer: m.layer.clone(),
                    reason: "common block differs from the group's shared block",
                });
            }
        }
        let members = members
            .into_iter()
            .map(|mut m| {
                m.v_common = Arc::clone(&v_common);
                m
            })
            .collect();
        Ok(Self {
            members,
            v_common,
            objective_trace: Vec::new(),
            config,
        })
    }

    pub(crate) fn with_trace(mut self, trace: Vec<(usize, f64)>) -> Self {
        self.objective_trace = trace;
        self
    }

    pub fn members(&self) -> &[Decomposition] {
        &self.members
    }

    /// The shared common block.
    pub fn v_common(&self) -> &DenseMatrix {
        &self.v_common
    }

    /// Objective value recorded at the end of each epoch, as
    /// (1-based epoch, value) pairs.
    pub fn objective_trace(&self) -> &[(usize, f64)] {
        &self.objective_trace
    }

    /// Configuration the group was solved with.
    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Member with the given layer name, if present.
    pub fn member(&self, layer: &str) -> Option<&Decomposition> {
        self.members.iter().find(|m| m.layer() == layer)
    }

    pub fn into_members(self) -> Vec<Decomposition> {
        self.members
    }
}
