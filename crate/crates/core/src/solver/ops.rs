//! Per-layer update operations of the alternating solver.
//!
//! Every operation works on one layer's matrices. The data term comes in two
//! flavors: calibration pairs `(X, Y)` fit the layer response `Y ~ W X`, and
//! weight-only mode materializes `X = I`, `Y = W`, `s = 1` so the identical
//! formulas fit the weights directly.

use crate::matrixcore::{
    pseudoinverse, qr_thin, shrink, top_q_project, truncated_svd, DenseMatrix, SparseMatrix,
};

use super::{SimilaritySign, SolverError};

/// Data term for one layer.
#[derive(Debug, Clone, Copy)]
pub enum DataTerm<'a> {
    /// Fit the weights directly (`X = I`, `Y = W`, one sample).
    WeightOnly,
    /// Fit sampled responses: `x` is p-by-s input activations, `y` is the
    /// n-by-s reference output.
    Calibration { x: &'a DenseMatrix, y: &'a DenseMatrix },
}

/// Precomputed per-layer quadratics shared by all update operations.
pub(crate) struct LayerTerm {
    pub(crate) w: DenseMatrix,
    pub(crate) x: DenseMatrix,
    pub(crate) y: DenseMatrix,
    pub(crate) samples: usize,
    pub(crate) lambda: f64,
    /// `X Xᵀ / s`.
    pub(crate) xxt_over_s: DenseMatrix,
    /// `Y Xᵀ / s`.
    pub(crate) yxt_over_s: DenseMatrix,
    /// Pseudoinverse of `2 lambda I + X Xᵀ / s`.
    pub(crate) a_pinv: DenseMatrix,
    /// Diagonal of `X Xᵀ / s`, indexed by column of `W`.
    pub(crate) diag: Vec<f64>,
}

impl LayerTerm {
    pub(crate) fn new(
        w: &DenseMatrix,
        data: &DataTerm<'_>,
        lambda: f64,
    ) -> Result<Self, SolverError> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(SolverError::NegativeRegularizer {
                name: "lambda",
                value: lambda,
            });
        }
        let p = w.cols();
        let (x, y, samples) = match data {
            DataTerm::WeightOnly => (DenseMatrix::identity(p), w.clone(), 1),
            DataTerm::Calibration { x, y } => {
                if x.cols() == 0 {
                    return Err(SolverError::EmptyCalibration);
                }
                if x.rows() != p {
                    return Err(SolverError::ShapeMismatch {
                        op: "data term",
                        detail: "calibration input rows must equal weight columns",
                    });
                }
                if y.rows() != w.rows() || y.cols() != x.cols() {
                    return Err(SolverError::ShapeMismatch {
                        op: "data term",
                        detail: "calibration output shape must be weight rows by sample count",
                    });
                }
                ((*x).clone(), (*y).clone(), x.cols())
            }
        };
        let inv_s = 1.0 / samples as f64;
        let xt = x.transpose();
        let xxt_over_s = (&x * &xt).scale(inv_s);
        let yxt_over_s = (&y * &xt).scale(inv_s);
        let a = &DenseMatrix::identity(p).scale(2.0 * lambda) + &xxt_over_s;
        let a_pinv = pseudoinverse(&a)?;
        let diag = (0..p).map(|j| xxt_over_s.get(j, j)).collect();
        Ok(Self {
            w: w.clone(),
            x,
            y,
            samples,
            lambda,
            xxt_over_s,
            yxt_over_s,
            a_pinv,
            diag,
        })
    }

    /// Gradient of the data + weight-residual terms at approximation
    /// `UV + S`: `((UV+S)X − Y)Xᵀ/s + 2·lambda·((UV+S) − W)`.
    fn quadratic_gradient(&self, approx: &DenseMatrix) -> DenseMatrix {
        let data_part = &(approx * &self.xxt_over_s) - &self.yxt_over_s;
        let reg_part = (approx - &self.w).scale(2.0 * self.lambda);
        &data_part + &reg_part
    }

    /// Per-column curvature `diag_j + 2·lambda`, the exact diagonal of the
    /// quadratic Hessian when `UᵀU = I`.
    fn column_curvature(&self, j: usize) -> Result<f64, SolverError> {
        let d = self.diag[j] + 2.0 * self.lambda;
        if !(d > 0.0) {
            return Err(SolverError::ZeroPreconditioner { column: j });
        }
        Ok(d)
    }
}

/// Weight-residual strength: `10^eta` times the largest singular value of the
/// sample second moment `X Xᵀ / s`, or exactly `10^eta` with no samples
/// (weight-only mode).
pub fn compute_lambda(x: Option<&DenseMatrix>, eta: f64) -> Result<f64, SolverError> {
    if !(eta > -3.0 && eta < 3.0) {
        return Err(SolverError::InvalidEta(eta));
    }
    let base = 10f64.powf(eta);
    match x {
        None => Ok(base),
        Some(x) => {
            if x.cols() == 0 {
                return Err(SolverError::EmptyCalibration);
            }
            let moment = (&(x * &x.transpose())).scale(1.0 / x.cols() as f64);
            let top = truncated_svd(&moment, 1)?;
            Ok(base * top.singular_values[0])
        }
    }
}

/// Depth-proximity weight between 1-based layer positions: `1/(j−i)` for
/// `i < j`, otherwise zero.
pub fn theta_weight(i: usize, j: usize) -> f64 {
    if i < j {
        1.0 / (j - i) as f64
    } else {
        0.0
    }
}

/// Individual-block rank per epoch: grows from 1 by `delta_m` until it
/// reaches `m_target`.
pub fn greedy_rank_schedule(m_target: usize, delta_m: usize, epochs: usize) -> Vec<usize> {
    assert!(m_target >= 1, "rank target must be at least 1");
    assert!(delta_m >= 1, "rank increment must be at least 1");
    (0..epochs).map(|e| (1 + e * delta_m).min(m_target)).collect()
}

/// One closed-form refresh of both factors.
///
/// With `A = 2 lambda I + XXᵀ/s` and `B = 2 lambda (W−S) + (YXᵀ − S XXᵀ)/s`
/// (the normal equations of the layer objective, so the refreshed `V` is the
/// exact minimizer over `V` for the given subspace), the new `U` is the
/// orthonormal factor of `B Vᵀ_prev` and `V = Uᵀ (B A^+)`.
/// Collapsed columns of `B Vᵀ_prev` are reinitialized from the residual's
/// leading right-singular vectors (logged, not fatal).
pub fn update_u_v_qr(
    w: &DenseMatrix,
    s: &SparseMatrix,
    v_prev: &DenseMatrix,
    data: &DataTerm<'_>,
    lambda: f64,
) -> Result<(DenseMatrix, DenseMatrix), SolverError> {
    let term = LayerTerm::new(w, data, lambda)?;
    qr_update_term(&term, s, v_prev)
}

pub(crate) fn qr_update_term(
    term: &LayerTerm,
    s: &SparseMatrix,
    v_prev: &DenseMatrix,
) -> Result<(DenseMatrix, DenseMatrix), SolverError> {
    let (n, p) = (term.w.rows(), term.w.cols());
    if s.rows() != n || s.cols() != p {
        return Err(SolverError::ShapeMismatch {
            op: "update_u_v_qr",
            detail: "sparse part must match the weight shape",
        });
    }
    if v_prev.cols() != p {
        return Err(SolverError::ShapeMismatch {
            op: "update_u_v_qr",
            detail: "right factor columns must equal weight columns",
        });
    }
    let m = v_prev.rows();
    if m == 0 || m > n.min(p) {
        return Err(SolverError::ShapeMismatch {
            op: "update_u_v_qr",
            detail: "right factor rows must lie in 1..=min(weight rows, weight columns)",
        });
    }

    let s_dense = s.to_dense();
    let w_minus_s = &term.w - &s_dense;
    let b = &w_minus_s.scale(2.0 * term.lambda)
        + &(&term.yxt_over_s - &(&s_dense * &term.xxt_over_s));
    let mut target = &b * &v_prev.transpose();

    let tol = 1e-14 * (1.0 + target.frobenius_norm());
    let collapsed: Vec<usize> = (0..m)
        .filter(|&col| {
            let norm_sq: f64 = (0..n).map(|r| target.get(r, col).powi(2)).sum();
            norm_sq.sqrt() <= tol
        })
        .collect();
    if !collapsed.is_empty() {
        log::warn!(
            "qr update: reinitializing {} collapsed column(s) from the residual",
            collapsed.len()
        );
        let svd = truncated_svd(&w_minus_s, collapsed.len().min(n.min(p)))?;
        for (pick, &col) in collapsed.iter().enumerate() {
            let mut replaced = false;
            if pick < svd.vt.rows() {
                let direction = svd.vt.row_slice(pick..pick + 1).transpose();
                let candidate = &b * &direction;
                if candidate.frobenius_norm() > tol {
                    for r in 0..n {
                        target.set(r, col, candidate.get(r, 0));
                    }
                    replaced = true;
                }
            }
            if !replaced {
                for r in 0..n {
                    target.set(r, col, if r == col { 1.0 } else { 0.0 });
                }
            }
        }
    }

    let (q, _r) = qr_thin(&target)?;
    let v = &q.transpose() * &(&b * &term.a_pinv);
    Ok((q, v))
}

/// One preconditioned gradient step on the right factor.
///
/// The gradient is `Uᵀ((UV+S)X − Y)Xᵀ/s + 2·lambda·Uᵀ(UV+S−W)`; each column
/// is divided by the exact diagonal curvature `(XXᵀ)_jj/s + 2·lambda`.
pub fn gradient_step_v(
    u: &DenseMatrix,
    v: &DenseMatrix,
    s: &SparseMatrix,
    w: &DenseMatrix,
    data: &DataTerm<'_>,
    lambda: f64,
) -> Result<DenseMatrix, SolverError> {
    let term = LayerTerm::new(w, data, lambda)?;
    gradient_step_term(&term, u, v, s)
}

fn check_factor_shapes(
    op: &'static str,
    term: &LayerTerm,
    u: &DenseMatrix,
    v: &DenseMatrix,
    s: &SparseMatrix,
) -> Result<(), SolverError> {
    let (n, p) = (term.w.rows(), term.w.cols());
    if u.rows() != n || u.cols() != v.rows() || v.cols() != p {
        return Err(SolverError::ShapeMismatch {
            op,
            detail: "factor shapes must compose to the weight shape",
        });
    }
    if s.rows() != n || s.cols() != p {
        return Err(SolverError::ShapeMismatch {
            op,
            detail: "sparse part must match the weight shape",
        });
    }
    Ok(())
}

pub(crate) fn gradient_step_term(
    term: &LayerTerm,
    u: &DenseMatrix,
    v: &DenseMatrix,
    s: &SparseMatrix,
) -> Result<DenseMatrix, SolverError> {
    check_factor_shapes("gradient_step_v", term, u, v, s)?;
    let approx = &(u * v) + &s.to_dense();
    let g = &u.transpose() * &term.quadratic_gradient(&approx);
    let mut out = v.clone();
    for j in 0..v.cols() {
        let d = term.column_curvature(j)?;
        for i in 0..v.rows() {
            out.set(i, j, v.get(i, j) - g.get(i, j) / d);
        }
    }
    Ok(out)
}

/// One proximal step on the sparse part.
///
/// Takes the same quadratic gradient as the `V` step (without the `Uᵀ`
/// projection), steps each column by the inverse curvature, applies soft
/// shrinkage at `alpha_j·lambda2`, and optionally projects to the `card`
/// largest magnitudes.
#[allow(clippy::too_many_arguments)]
pub fn update_s(
    u: &DenseMatrix,
    v: &DenseMatrix,
    s: &SparseMatrix,
    w: &DenseMatrix,
    data: &DataTerm<'_>,
    lambda: f64,
    lambda2: f64,
    card: usize,
    enforce_cardinality: bool,
) -> Result<SparseMatrix, SolverError> {
    let term = LayerTerm::new(w, data, lambda)?;
    update_s_term(&term, u, v, s, lambda2, card, enforce_cardinality)
}

pub(crate) fn update_s_term(
    term: &LayerTerm,
    u: &DenseMatrix,
    v: &DenseMatrix,
    s: &SparseMatrix,
    lambda2: f64,
    card: usize,
    enforce_cardinality: bool,
) -> Result<SparseMatrix, SolverError> {
    check_factor_shapes("update_s", term, u, v, s)?;
    if !(lambda2 >= 0.0 && lambda2.is_finite()) {
        return Err(SolverError::NegativeRegularizer {
            name: "lambda2",
            value: lambda2,
        });
    }
    let s_dense = s.to_dense();
    let approx = &(u * v) + &s_dense;
    let g = term.quadratic_gradient(&approx);
    let (n, p) = (term.w.rows(), term.w.cols());
    let mut shrunk = DenseMatrix::zeros(n, p);
    for j in 0..p {
        let alpha = 1.0 / term.column_curvature(j)?;
        let tau = alpha * lambda2;
        for i in 0..n {
            let candidate = s_dense.get(i, j) - alpha * g.get(i, j);
            shrunk.set(i, j, shrink(candidate, tau));
        }
    }
    if enforce_cardinality {
        Ok(top_q_project(&shrunk, card))
    } else {
        Ok(SparseMatrix::from_dense(&shrunk))
    }
}

/// One simultaneous similarity step over a group's individual blocks.
///
/// Each block moves against the depth-weighted sum of its differences to the
/// others: `V̄_t ← V̄_t − sigma·2·lambda_theta·Σ_j (θ_tj + θ_jt)(V̄_t − V̄_j)`,
/// with all differences taken at the old values. When ranks differ during
/// greedy growth, only the common leading rows move.
pub fn apply_similarity_step(
    v_individual: &mut [DenseMatrix],
    lambda_theta: f64,
    sign: SimilaritySign,
) {
    assert!(
        lambda_theta >= 0.0 && lambda_theta.is_finite(),
        "similarity strength must be finite and nonnegative"
    );
    if v_individual.len() < 2 || lambda_theta == 0.0 {
        return;
    }
    let p = v_individual[0].cols();
    assert!(
        v_individual.iter().all(|v| v.cols() == p),
        "individual blocks must share their column count"
    );
    let m_min = v_individual.iter().map(|v| v.rows()).min().unwrap_or(0);
    if m_min == 0 {
        return;
    }
    let step = sign.factor() * 2.0 * lambda_theta;
    let heads: Vec<DenseMatrix> = v_individual
        .iter()
        .map(|v| v.row_slice(0..m_min))
        .collect();
    let deltas: Vec<DenseMatrix> = (0..heads.len())
        .map(|t| {
            let mut acc = DenseMatrix::zeros(m_min, p);
            for j in 0..heads.len() {
                if j == t {
                    continue;
                }
                let coef = theta_weight(t + 1, j + 1) + theta_weight(j + 1, t + 1);
                acc = &acc + &(&heads[t] - &heads[j]).scale(coef);
            }
            acc.scale(step)
        })
        .collect();
    for (v, delta) in v_individual.iter_mut().zip(&deltas) {
        for i in 0..m_min {
            for c in 0..p {
                v.set(i, c, v.get(i, c) - delta.get(i, c));
            }
        }
    }
}
