//! Alternating low-rank + sparse solver with cross-layer sharing.
//!
//! Each layer is approximated as `U [V_common; V_individual] + S`: an
//! orthonormal left factor, a right factor whose leading block is shared by
//! the whole group, and a sparse residual. The engine alternates closed-form
//! QR refreshes, preconditioned gradient steps, a depth-weighted similarity
//! step between individual blocks, and proximal sparse updates, growing the
//! individual rank greedily across epochs.

mod config;
mod decomposition;
mod engine;
mod ops;

pub use config::{CommonUpdate, DataTermMode, SimilaritySign, SolverConfig, SolverMode};
pub use decomposition::{Decomposition, GroupDecomposition};
pub use engine::{
    decompose_group, decompose_problem, decompose_single, objective_value, GroupProblem,
    LayerProblem,
};
pub use ops::{
    apply_similarity_step, compute_lambda, gradient_step_v, greedy_rank_schedule, theta_weight,
    update_s, update_u_v_qr, DataTerm,
};

use crate::matrixcore::MatrixError;

/// Errors raised by solver configuration, validation, and updates.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error("eta must lie strictly between -3 and 3, got {0}")]
    InvalidEta(f64),
    #[error("common_ratio must lie in [0, 1], got {0}")]
    InvalidRatio(f64),
    #[error("rank target must be at least 1")]
    ZeroRank,
    #[error("epoch count must be at least 1")]
    ZeroEpochs,
    #[error("rank increment delta_m must be at least 1")]
    ZeroDeltaM,
    #[error("{name} must be finite and nonnegative, got {value}")]
    NegativeRegularizer { name: &'static str, value: f64 },
    #[error("mode misuse: {detail}")]
    Mode { detail: &'static str },
    #[error("layer {layer}: rank {rank} exceeds min({rows}, {cols})")]
    RankTooLarge {
        layer: String,
        rank: usize,
        rows: usize,
        cols: usize,
    },
    #[error("layer {layer}: cardinality {card} exceeds the {capacity} entries available")]
    CardTooLarge {
        layer: String,
        card: usize,
        capacity: usize,
    },
    #[error("layer {layer}: calibration pairs required but absent")]
    CalibrationMissing { layer: String },
    #[error("calibration input has no sample columns")]
    EmptyCalibration,
    #[error("group has no members")]
    EmptyGroup,
    #[error("column count mismatch across group members: expected {expected}, got {got}")]
    ColumnMismatch { expected: usize, got: usize },
    #[error("{op}: {detail}")]
    ShapeMismatch {
        op: &'static str,
        detail: &'static str,
    },
    #[error("zero curvature in column {column}: zero data column with lambda = 0")]
    ZeroPreconditioner { column: usize },
    #[error("layer {layer}: inconsistent factor shapes: {reason}")]
    FactorShape {
        layer: String,
        reason: &'static str,
    },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}
