//! Epoch loop orchestrating the per-layer updates across a group.

use std::sync::Arc;

use crate::layermodel::{CalibrationPair, LayerGroup};
use crate::matrixcore::{truncated_svd, DenseMatrix, SparseMatrix};

use super::ops::{self, DataTerm, LayerTerm};
use super::{
    CommonUpdate, DataTermMode, Decomposition, GroupDecomposition, SimilaritySign, SolverConfig,
    SolverError, SolverMode,
};

/// One layer as the solver sees it: a weight matrix and optional calibration.
#[derive(Debug, Clone)]
pub struct LayerProblem {
    pub name: String,
    pub weights: DenseMatrix,
    pub calibration: Option<CalibrationPair>,
}

/// Solver input: the layers solved together.
#[derive(Debug, Clone)]
pub struct GroupProblem {
    pub layers: Vec<LayerProblem>,
}

impl GroupProblem {
    /// Snapshot of a layer group's matrices and calibration data.
    pub fn from_group(group: &LayerGroup) -> Self {
        let calibration = group.calibration();
        let layers = group
            .members()
            .iter()
            .enumerate()
            .map(|(i, member)| LayerProblem {
                name: member.name().to_owned(),
                weights: member.weights().clone(),
                calibration: calibration.map(|pairs| pairs[i].clone()),
            })
            .collect();
        Self { layers }
    }

    /// A one-layer problem.
    pub fn single(
        name: &str,
        weights: &DenseMatrix,
        calibration: Option<&CalibrationPair>,
    ) -> Self {
        Self {
            layers: vec![LayerProblem {
                name: name.to_owned(),
                weights: weights.clone(),
                calibration: calibration.cloned(),
            }],
        }
    }
}

/// Decomposes one layer. Requires single mode; calibration is optional.
pub fn decompose_single(
    weights: &DenseMatrix,
    calibration: Option<&CalibrationPair>,
    config: &SolverConfig,
) -> Result<Decomposition, SolverError> {
    if config.mode != SolverMode::Single {
        return Err(SolverError::Mode {
            detail: "single-layer entry point requires single mode",
        });
    }
    let problem = GroupProblem::single("layer", weights, calibration);
    let solved = decompose_problem(&problem, config)?;
    Ok(solved
        .into_members()
        .into_iter()
        .next()
        .expect("a solved single problem has one member"))
}

/// Decomposes a layer group. Requires a multi-layer mode.
pub fn decompose_group(
    group: &LayerGroup,
    config: &SolverConfig,
) -> Result<GroupDecomposition, SolverError> {
    if config.mode == SolverMode::Single {
        return Err(SolverError::Mode {
            detail: "group entry point requires independent, shared, or micik mode",
        });
    }
    decompose_problem(&GroupProblem::from_group(group), config)
}

/// Runs the full alternating solve on a group problem.
///
/// Per epoch: grow individual ranks toward the target, then per layer refresh
/// both factors by QR, pin the common rows to the shared block, take one
/// preconditioned gradient step, and pass the stepped common rows on; after
/// the layer loop apply the similarity step (micik only) and refresh every
/// sparse part. The objective is recorded at each epoch's end.
pub fn decompose_problem(
    problem: &GroupProblem,
    config: &SolverConfig,
) -> Result<GroupDecomposition, SolverError> {
    config.validate()?;
    let t_count = problem.layers.len();
    if t_count == 0 {
        return Err(SolverError::EmptyGroup);
    }
    if config.mode == SolverMode::Single && t_count != 1 {
        return Err(SolverError::Mode {
            detail: "single mode accepts exactly one layer",
        });
    }
    let p = problem.layers[0].weights.cols();
    for layer in &problem.layers {
        let n = layer.weights.rows();
        if layer.weights.cols() != p {
            return Err(SolverError::ColumnMismatch {
                expected: p,
                got: layer.weights.cols(),
            });
        }
        if config.rank > n.min(p) {
            return Err(SolverError::RankTooLarge {
                layer: layer.name.clone(),
                rank: config.rank,
                rows: n,
                cols: p,
            });
        }
        if config.card > n * p {
            return Err(SolverError::CardTooLarge {
                layer: layer.name.clone(),
                card: config.card,
                capacity: n * p,
            });
        }
        if config.data_term == DataTermMode::Calibration && layer.calibration.is_none() {
            return Err(SolverError::CalibrationMissing {
                layer: layer.name.clone(),
            });
        }
    }

    let terms: Vec<LayerTerm> = problem
        .layers
        .iter()
        .map(|layer| {
            let data = layer_data_term(config, layer);
            let lambda = match &data {
                DataTerm::WeightOnly => ops::compute_lambda(None, config.eta)?,
                DataTerm::Calibration { x, .. } => ops::compute_lambda(Some(x), config.eta)?,
            };
            LayerTerm::new(&layer.weights, &data, lambda)
        })
        .collect::<Result<_, _>>()?;

    let m_hat = config.common_rank();
    let m_bar_target = config.rank - m_hat;
    let schedule = if m_bar_target >= 1 {
        ops::greedy_rank_schedule(m_bar_target, config.delta_m, config.epochs)
    } else {
        vec![0; config.epochs]
    };

    let mut v_common = if m_hat > 0 {
        truncated_svd(&problem.layers[0].weights, m_hat)?.vt
    } else {
        DenseMatrix::zeros(0, p)
    };
    let mut v_bars: Vec<DenseMatrix> = problem
        .layers
        .iter()
        .map(|layer| {
            if schedule[0] > 0 {
                let svd = truncated_svd(&layer.weights, m_hat + schedule[0])?;
                Ok(svd.vt.row_slice(m_hat..m_hat + schedule[0]))
            } else {
                Ok(DenseMatrix::zeros(0, p))
            }
        })
        .collect::<Result<_, SolverError>>()?;
    let mut us: Vec<DenseMatrix> = problem
        .layers
        .iter()
        .zip(&v_bars)
        .map(|(layer, v_bar)| DenseMatrix::zeros(layer.weights.rows(), m_hat + v_bar.rows()))
        .collect();
    let mut ss: Vec<SparseMatrix> = problem
        .layers
        .iter()
        .map(|layer| SparseMatrix::empty(layer.weights.rows(), p))
        .collect();

    let lambda_theta = config.effective_lambda_theta();
    let mut trace = Vec::with_capacity(config.epochs);
    for (epoch_index, &m_bar_epoch) in schedule.iter().enumerate() {
        for t in 0..t_count {
            let current = v_bars[t].rows();
            if m_bar_epoch > current {
                let v_full = v_common.vstack(&v_bars[t]);
                let residual = &(&problem.layers[t].weights - &(&us[t] * &v_full))
                    - &ss[t].to_dense();
                let fresh = truncated_svd(&residual, m_bar_epoch - current)?.vt;
                v_bars[t] = v_bars[t].vstack(&fresh);
            }
        }

        let mut averaged_heads: Vec<DenseMatrix> = Vec::new();
        for t in 0..t_count {
            let v_prev = v_common.vstack(&v_bars[t]);
            let (u_new, mut v_new) = ops::qr_update_term(&terms[t], &ss[t], &v_prev)?;
            for i in 0..m_hat {
                for c in 0..p {
                    v_new.set(i, c, v_common.get(i, c));
                }
            }
            let v_stepped = ops::gradient_step_term(&terms[t], &u_new, &v_new, &ss[t])?;
            us[t] = u_new;
            if m_hat > 0 {
                let head = v_stepped.row_slice(0..m_hat);
                match config.common_update {
                    CommonUpdate::Carry => v_common = head,
                    CommonUpdate::Average => averaged_heads.push(head),
                }
            }
            v_bars[t] = v_stepped.row_slice(m_hat..v_stepped.rows());
        }
        if m_hat > 0 && config.common_update == CommonUpdate::Average {
            let mut mean = DenseMatrix::zeros(m_hat, p);
            for head in &averaged_heads {
                mean = &mean + head;
            }
            v_common = mean.scale(1.0 / averaged_heads.len() as f64);
        }

        if lambda_theta > 0.0 && t_count > 1 {
            ops::apply_similarity_step(&mut v_bars, lambda_theta, config.similarity_sign);
        }

        for t in 0..t_count {
            let v_full = v_common.vstack(&v_bars[t]);
            ss[t] = ops::update_s_term(
                &terms[t],
                &us[t],
                &v_full,
                &ss[t],
                config.lambda2,
                config.card,
                config.enforce_cardinality,
            )?;
        }

        let approximations: Vec<DenseMatrix> = (0..t_count)
            .map(|t| &(&us[t] * &v_common.vstack(&v_bars[t])) + &ss[t].to_dense())
            .collect();
        trace.push((
            epoch_index + 1,
            objective_core(
                &terms,
                &approximations,
                &v_bars,
                lambda_theta,
                config.similarity_sign,
            ),
        ));
    }

    let shared = Arc::new(v_common);
    let members = problem
        .layers
        .iter()
        .zip(us)
        .zip(v_bars)
        .zip(ss)
        .map(|(((layer, u), v_bar), s)| {
            Decomposition::new(&layer.name, u, Arc::clone(&shared), v_bar, s)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GroupDecomposition::new(members, config.clone())?.with_trace(trace))
}

/// Evaluates the full objective for a decomposition of a problem.
///
/// Sums each layer's data term `‖Y − (UV+S)X‖²/(2s)` and weight-residual term
/// `lambda·‖W − UV − S‖²`, plus the signed depth-weighted distances between
/// individual blocks when the configuration activates them.
pub fn objective_value(
    problem: &GroupProblem,
    decomposition: &GroupDecomposition,
    config: &SolverConfig,
) -> Result<f64, SolverError> {
    if problem.layers.len() != decomposition.members().len() {
        return Err(SolverError::ShapeMismatch {
            op: "objective_value",
            detail: "decomposition member count must match the problem layer count",
        });
    }
    let mut terms = Vec::with_capacity(problem.layers.len());
    let mut approximations = Vec::with_capacity(problem.layers.len());
    let mut v_bars = Vec::with_capacity(problem.layers.len());
    for (layer, member) in problem.layers.iter().zip(decomposition.members()) {
        let data = layer_data_term(config, layer);
        let lambda = match &data {
            DataTerm::WeightOnly => ops::compute_lambda(None, config.eta)?,
            DataTerm::Calibration { x, .. } => ops::compute_lambda(Some(x), config.eta)?,
        };
        terms.push(LayerTerm::new(&layer.weights, &data, lambda)?);
        approximations.push(member.reconstruct());
        v_bars.push(member.v_individual().clone());
    }
    Ok(objective_core(
        &terms,
        &approximations,
        &v_bars,
        config.effective_lambda_theta(),
        config.similarity_sign,
    ))
}

fn layer_data_term<'a>(config: &SolverConfig, layer: &'a LayerProblem) -> DataTerm<'a> {
    match (config.data_term, layer.calibration.as_ref()) {
        (DataTermMode::Calibration, Some(pair)) => DataTerm::Calibration {
            x: &pair.x,
            y: &pair.y,
        },
        _ => DataTerm::WeightOnly,
    }
}

fn objective_core(
    terms: &[LayerTerm],
    approximations: &[DenseMatrix],
    v_bars: &[DenseMatrix],
    lambda_theta: f64,
    sign: SimilaritySign,
) -> f64 {
    let mut total = 0.0;
    for (term, approx) in terms.iter().zip(approximations) {
        let data_residual = &(approx * &term.x) - &term.y;
        total += data_residual.frobenius_norm().powi(2) * 0.5 / term.samples as f64;
        let weight_residual = &term.w - approx;
        total += term.lambda * weight_residual.frobenius_norm().powi(2);
    }
    if lambda_theta > 0.0 && v_bars.len() > 1 {
        let m_min = v_bars.iter().map(|v| v.rows()).min().unwrap_or(0);
        if m_min > 0 {
            let mut distance_sum = 0.0;
            for i in 0..v_bars.len() {
                for j in 0..v_bars.len() {
                    let coef = ops::theta_weight(i + 1, j + 1);
                    if coef > 0.0 {
                        let diff =
                            &v_bars[i].row_slice(0..m_min) - &v_bars[j].row_slice(0..m_min);
                        distance_sum += coef * diff.frobenius_norm().powi(2);
                    }
                }
            }
            total += sign.factor() * lambda_theta * distance_sum;
        }
    }
    total
}
