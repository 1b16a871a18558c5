//! Entrywise shrinkage and cardinality projection.

use super::{DenseMatrix, MatrixError, SparseMatrix};

/// Soft shrinkage: moves every entry toward zero by `tau`, clamping at zero.
pub fn soft_threshold(m: &DenseMatrix, tau: f64) -> Result<DenseMatrix, MatrixError> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(MatrixError::NegativeThreshold(tau));
    }
    let mut out = m.clone();
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            out.set(i, j, shrink(m.get(i, j), tau));
        }
    }
    Ok(out)
}

#[inline]
pub(crate) fn shrink(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

/// Keeps the `q` entries of largest magnitude as a sparse matrix.
///
/// Ties are broken by row-major scan order, so the result is deterministic.
/// Zero entries are never stored; the result holds `min(q, nnz)` triplets.
pub fn top_q_project(m: &DenseMatrix, q: usize) -> SparseMatrix {
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let v = m.get(i, j);
            if v != 0.0 {
                entries.push((i, j, v));
            }
        }
    }
    // Stable sort keeps scan order among equal magnitudes.
    entries.sort_by(|a, b| b.2.abs().partial_cmp(&a.2.abs()).unwrap());
    entries.truncate(q);
    SparseMatrix::from_triplets(m.rows(), m.cols(), entries)
        .expect("entries from a dense matrix are valid triplets")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn soft_threshold_known_values() {
        let m = DenseMatrix::from_row_major(1, 4, &[0.5, -0.05, 0.13, -0.2]).unwrap();
        let out = soft_threshold(&m, 0.13).unwrap();
        let expected = [0.5 - 0.13, 0.0, 0.0, -0.2 + 0.13];
        for (got, want) in out.row_major().iter().zip(expected) {
            assert!((got - want).abs() < 1e-15, "got {got}, want {want}");
        }
    }

    #[test]
    fn soft_threshold_zero_tau_is_identity() {
        let m = DenseMatrix::from_row_major(2, 2, &[1.0, -2.0, 0.0, 3.5]).unwrap();
        assert_eq!(soft_threshold(&m, 0.0).unwrap().row_major(), m.row_major());
    }

    #[test]
    fn soft_threshold_rejects_bad_tau() {
        let m = DenseMatrix::zeros(1, 1);
        assert_eq!(
            soft_threshold(&m, -0.1).unwrap_err(),
            MatrixError::NegativeThreshold(-0.1)
        );
        assert!(soft_threshold(&m, f64::NAN).is_err());
    }

    #[test]
    fn top_q_keeps_largest_magnitudes() {
        let m = DenseMatrix::from_row_major(2, 2, &[3.0, -5.0, 1.0, 2.0]).unwrap();
        let s = top_q_project(&m, 2);
        assert_eq!(s.triplets(), &[(0, 0, 3.0), (0, 1, -5.0)]);
    }

    #[test]
    fn top_q_edge_cases() {
        let m = DenseMatrix::from_row_major(2, 2, &[0.0, 7.0, 0.0, -1.0]).unwrap();
        assert_eq!(top_q_project(&m, 0).nnz(), 0);
        // Zeros are never stored even when the budget allows more entries.
        let s = top_q_project(&m, 4);
        assert_eq!(s.triplets(), &[(0, 1, 7.0), (1, 1, -1.0)]);
    }

    #[test]
    fn top_q_tie_break_uses_scan_order() {
        let m = DenseMatrix::from_row_major(2, 2, &[1.0, -1.0, 1.0, 1.0]).unwrap();
        let s = top_q_project(&m, 2);
        assert_eq!(s.triplets(), &[(0, 0, 1.0), (0, 1, -1.0)]);
    }

    #[test]
    fn top_q_is_deterministic() {
        let m = DenseMatrix::from_row_major(3, 3, &[4.0, -4.0, 2.0, 2.0, -2.0, 1.0, 1.0, -1.0, 0.5])
            .unwrap();
        let a = top_q_project(&m, 5);
        let b = top_q_project(&m, 5);
        assert_eq!(a.triplets(), b.triplets());
    }

    proptest! {
        #[test]
        fn soft_threshold_is_a_contraction(
            xs in proptest::collection::vec(-100.0f64..100.0, 1..40),
            ys in proptest::collection::vec(-100.0f64..100.0, 1..40),
            tau in 0.0f64..10.0,
        ) {
            let n = xs.len().min(ys.len());
            let a = DenseMatrix::from_row_major(1, n, &xs[..n]).unwrap();
            let b = DenseMatrix::from_row_major(1, n, &ys[..n]).unwrap();
            let sa = soft_threshold(&a, tau).unwrap();
            let sb = soft_threshold(&b, tau).unwrap();
            for j in 0..n {
                prop_assert!((sa.get(0, j) - sb.get(0, j)).abs() <= (a.get(0, j) - b.get(0, j)).abs() + 1e-12);
                prop_assert!((sa.get(0, j) - a.get(0, j)).abs() <= tau + 1e-12);
            }
        }

        #[test]
        fn top_q_respects_budget_and_magnitudes(
            xs in proptest::collection::vec(-50.0f64..50.0, 4..30),
            q in 0usize..12,
        ) {
            let m = DenseMatrix::from_row_major(1, xs.len(), &xs).unwrap();
            let s = top_q_project(&m, q);
            prop_assert!(s.nnz() <= q);
            // Every kept entry is at least as large as every dropped one.
            let kept: Vec<usize> = s.triplets().iter().map(|t| t.1).collect();
            let min_kept = s
                .triplets()
                .iter()
                .map(|t| t.2.abs())
                .fold(f64::INFINITY, f64::min);
            if s.nnz() == q {
                for (j, &x) in xs.iter().enumerate() {
                    if !kept.contains(&j) {
                        prop_assert!(x.abs() <= min_kept + 1e-12);
                    }
                }
            }
        }
    }
}
