//! Compression accounting, error measurement, the factored inference path,
//! and cross-layer filter correspondence analysis.
//!
//! Parameter counts follow the storage model: each member keeps its own
//! `U` and individual right-factor rows plus sparse triplets, while the
//! common right-factor block is stored once per group. Per-layer rows
//! attribute the shared block pro rata; group totals count it exactly once,
//! so totals are exact integers. A closed-form estimate
//! `(individual rank + common rank / members) * (rows + cols) + card`
//! is emitted alongside for cross-checking; for a single layer it matches
//! the exact count exactly.

use serde::{Deserialize, Serialize};

use crate::layermodel::{chunk_layer, flatten_layer, LayerShape, LayerTensor};
use crate::matrixcore::DenseMatrix;
use crate::solver::{Decomposition, GroupDecomposition, GroupProblem, SolverConfig};

/// Errors raised by accounting, error measurement, or correspondence analysis.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("compressed parameter count must be at least 1")]
    ZeroCompressedCount,
    #[error("{op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("receptive fields differ: {a} vs {b}")]
    ReceptiveFieldMismatch { a: usize, b: usize },
    #[error("problem and decomposition disagree: {0}")]
    MemberMismatch(String),
}

/// Parameter counts for one member of a group.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCount {
    /// Layer name.
    pub name: String,
    /// Dense weight count `rows * cols`.
    pub original: u64,
    /// Exact storage with the shared block attributed pro rata, so the
    /// per-layer value may be fractional.
    pub compressed: f64,
    /// Closed-form estimate `(individual + common/members)*(rows+cols) + card`.
    pub closed_form: f64,
}

/// Parameter counts for a whole group; totals count the shared block once.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterCount {
    /// One row per member, in group order.
    pub per_layer: Vec<LayerCount>,
    /// Sum of dense weight counts.
    pub total_original: u64,
    /// Exact compressed storage for the group.
    pub total_compressed: u64,
    /// Sum of the per-layer closed-form estimates.
    pub total_closed_form: f64,
}

/// Counts the stored parameters of every member and of the group.
///
/// A member with `rows x cols` weights, common rank `mc`, individual rank
/// `mi` and `q` sparse entries stores `rows*(mc+mi) + mi*cols + q` values
/// of its own; the common block adds `mc*cols` once for the whole group.
pub fn parameter_count(gd: &GroupDecomposition) -> ParameterCount {
    let members = gd.members();
    let count = members.len() as u64;
    let common_rows = gd.v_common().rows() as u64;
    let common_cols = gd.v_common().cols() as u64;
    let shared = common_rows * common_cols;
    let mut per_layer = Vec::with_capacity(members.len());
    let mut total_original = 0u64;
    let mut total_compressed = shared;
    let mut total_closed_form = 0.0;
    for member in members {
        let rows = member.u().rows() as u64;
        let cols = member.v_individual().cols() as u64;
        let mc = member.common_rank() as u64;
        let mi = member.individual_rank() as u64;
        let q = member.card() as u64;
        let original = rows * cols;
        let own = rows * (mc + mi) + mi * cols + q;
        let compressed = own as f64 + shared as f64 / count as f64;
        let closed_form =
            (mi as f64 + mc as f64 / count as f64) * (rows + cols) as f64 + q as f64;
        per_layer.push(LayerCount {
            name: member.layer().to_string(),
            original,
            compressed,
            closed_form,
        });
        total_original += original;
        total_compressed += own;
        total_closed_form += closed_form;
    }
    ParameterCount {
        per_layer,
        total_original,
        total_compressed,
        total_closed_form,
    }
}

/// Ratio of original to compressed parameter counts.
pub fn compression_rate(original: u64, compressed: u64) -> Result<f64, MetricsError> {
    if compressed == 0 {
        return Err(MetricsError::ZeroCompressedCount);
    }
    Ok(original as f64 / compressed as f64)
}

/// Formats a rate with one decimal, e.g. `5.4X`.
pub fn format_rate(rate: f64) -> String {
    format!("{rate:.1}X")
}

/// Renders a parameter count the way summary tables do: `6998552` becomes
/// `7M`, `1300000` becomes `1.3M`, `9000` becomes `9k`, and counts below a
/// thousand stay plain digits.
pub fn humanize_count(count: u64) -> String {
    let (unit, suffix) = if count >= 1_000_000 {
        (1_000_000.0, "M")
    } else if count >= 1_000 {
        (1_000.0, "k")
    } else {
        return count.to_string();
    };
    let value = count as f64 / unit;
    if value < 10.0 {
        let text = format!("{value:.1}");
        let trimmed = text.strip_suffix(".0").unwrap_or(&text);
        format!("{trimmed}{suffix}")
    } else {
        format!("{:.0}{suffix}", value)
    }
}

/// Relative Frobenius error of a decomposition against its target weights.
///
/// Returns 0 for a zero target matched by zero factors; a zero target with
/// nonzero factors reports infinity.
pub fn reconstruction_error(w: &DenseMatrix, d: &Decomposition) -> Result<f64, MetricsError> {
    let rebuilt = d.reconstruct();
    if rebuilt.rows() != w.rows() || rebuilt.cols() != w.cols() {
        return Err(MetricsError::ShapeMismatch {
            op: "reconstruction_error",
            detail: format!(
                "weights are {}x{} but the decomposition rebuilds {}x{}",
                w.rows(),
                w.cols(),
                rebuilt.rows(),
                rebuilt.cols()
            ),
        });
    }
    let residual = (w - &rebuilt).frobenius_norm();
    let scale = w.frobenius_norm();
    if scale == 0.0 {
        return Ok(if residual == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(residual / scale)
}

/// Relative error of the compressed map on calibration data:
/// `|(UV+S)X - Y|_F / |Y|_F`.
pub fn output_error(
    d: &Decomposition,
    x: &DenseMatrix,
    y: &DenseMatrix,
) -> Result<f64, MetricsError> {
    let rebuilt = d.reconstruct();
    if x.rows() != rebuilt.cols() || y.rows() != rebuilt.rows() || y.cols() != x.cols() {
        return Err(MetricsError::ShapeMismatch {
            op: "output_error",
            detail: format!(
                "map is {}x{} but X is {}x{} and Y is {}x{}",
                rebuilt.rows(),
                rebuilt.cols(),
                x.rows(),
                x.cols(),
                y.rows(),
                y.cols()
            ),
        });
    }
    let residual = (&(&rebuilt * x) - y).frobenius_norm();
    let scale = y.frobenius_norm();
    if scale == 0.0 {
        return Ok(if residual == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(residual / scale)
}

/// Applies a decomposition to an input vector through its factored form.
///
/// The low-rank path computes `U*(V*x)` and the sparse path `S*x`
/// independently; their sum equals the dense `(UV+S)*x` product within
/// rounding.
pub fn apply_compressed(d: &Decomposition, x: &[f64]) -> Result<Vec<f64>, MetricsError> {
    let cols = d.v_individual().cols();
    if x.len() != cols {
        return Err(MetricsError::ShapeMismatch {
            op: "apply_compressed",
            detail: format!("input has {} entries, expected {cols}", x.len()),
        });
    }
    let mut vx = d.v_common().mul_vec(x);
    vx.extend(d.v_individual().mul_vec(x));
    let low_rank = d.u().mul_vec(&vx);
    let sparse = d.s().mul_vec(x);
    Ok(low_rank
        .iter()
        .zip(sparse.iter())
        .map(|(l, s)| l + s)
        .collect())
}

fn gcd(a: usize, b: usize) -> usize {
    let (mut a, mut b) = (a, b);
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn comparison_slices(tensor: &LayerTensor, g: usize) -> DenseMatrix {
    let (k, d) = match tensor.shape() {
        LayerShape::Conv { k, d, .. } => (k, d),
        LayerShape::Fc { p, .. } => (1, p),
    };
    chunk_layer(&flatten_layer(tensor), k, d, g)
        .expect("the gcd of the two depths divides each depth")
}

fn row_distance(a: &DenseMatrix, i: usize, b: &DenseMatrix, j: usize) -> f64 {
    (0..a.cols())
        .map(|c| {
            let diff = a.get(i, c) - b.get(j, c);
            diff * diff
        })
        .sum::<f64>()
        .sqrt()
}

fn nearest_rows(from: &DenseMatrix, to: &DenseMatrix) -> Vec<usize> {
    (0..from.rows())
        .map(|i| {
            let mut best = 0;
            let mut best_distance = f64::INFINITY;
            for j in 0..to.rows() {
                let distance = row_distance(from, i, to, j);
                if distance < best_distance {
                    best = j;
                    best_distance = distance;
                }
            }
            best
        })
        .collect()
}

/// Finds mutually nearest filters between two layers.
///
/// Filters are flattened row-wise; when depths differ, each filter is
/// split into depth chunks of `gcd` of the two depths so rows have equal
/// length, and indices then refer to those chunk rows. A pair `(i, j)` is
/// reported when `j` is the closest row to `i` and `i` the closest to `j`
/// in Euclidean distance, ties going to the lowest index. Pairs come back
/// sorted by ascending distance.
pub fn find_correspondences(
    a: &LayerTensor,
    b: &LayerTensor,
) -> Result<Vec<(usize, usize, f64)>, MetricsError> {
    let field = |t: &LayerTensor| match t.shape() {
        LayerShape::Conv { k, .. } => k,
        LayerShape::Fc { .. } => 1,
    };
    let depth = |t: &LayerTensor| match t.shape() {
        LayerShape::Conv { d, .. } => d,
        LayerShape::Fc { p, .. } => p,
    };
    let (ka, kb) = (field(a), field(b));
    if ka != kb {
        return Err(MetricsError::ReceptiveFieldMismatch { a: ka, b: kb });
    }
    let g = gcd(depth(a), depth(b));
    let rows_a = comparison_slices(a, g);
    let rows_b = comparison_slices(b, g);
    let nearest_in_b = nearest_rows(&rows_a, &rows_b);
    let nearest_in_a = nearest_rows(&rows_b, &rows_a);
    let mut pairs: Vec<(usize, usize, f64)> = nearest_in_b
        .iter()
        .enumerate()
        .filter(|&(i, &j)| nearest_in_a[j] == i)
        .map(|(i, &j)| (i, j, row_distance(&rows_a, i, &rows_b, j)))
        .collect();
    pairs.sort_by(|x, y| {
        x.2.partial_cmp(&y.2)
            .expect("tensor data is finite by construction")
            .then(x.0.cmp(&y.0))
            .then(x.1.cmp(&y.1))
    });
    Ok(pairs)
}

/// One layer's row in a compression report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReportRow {
    /// Layer name.
    pub name: String,
    /// Dense weight count.
    pub original_params: u64,
    /// Pro-rata compressed count (fractional when a shared block is split).
    pub compressed_params: f64,
    /// Rate rendered with one decimal, e.g. `"5.4"`.
    pub rate: String,
    /// Relative reconstruction error against the original weights.
    pub recon_error: f64,
    /// Relative output error on calibration data, when any was attached.
    pub output_error: Option<f64>,
}

/// Aggregate row of a compression report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTotals {
    /// Sum of dense weight counts.
    pub original_params: u64,
    /// Exact compressed count with shared blocks counted once per group.
    pub compressed_params: u64,
    /// Rate rendered with one decimal.
    pub rate: String,
}

/// Everything a compression run reports: counts, rates, errors, and the
/// objective trace, plus the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    /// Version of the tool that produced the report.
    pub tool_version: String,
    /// Configuration echo.
    pub config: SolverConfig,
    /// One row per layer across all groups.
    pub per_layer: Vec<LayerReportRow>,
    /// Aggregate counts and rate.
    pub totals: ReportTotals,
    /// `(epoch, objective)` pairs; merged reports sum per epoch.
    pub objective_trace: Vec<(usize, f64)>,
}

/// Builds the report for one solved group.
pub fn compression_report(
    problem: &GroupProblem,
    solved: &GroupDecomposition,
    tool_version: &str,
) -> Result<CompressionReport, MetricsError> {
    if problem.layers.len() != solved.members().len() {
        return Err(MetricsError::MemberMismatch(format!(
            "{} layers vs {} members",
            problem.layers.len(),
            solved.members().len()
        )));
    }
    let counts = parameter_count(solved);
    let mut per_layer = Vec::with_capacity(problem.layers.len());
    for (layer, (member, count)) in problem
        .layers
        .iter()
        .zip(solved.members().iter().zip(counts.per_layer.iter()))
    {
        if layer.name != member.layer() {
            return Err(MetricsError::MemberMismatch(format!(
                "layer {} paired with member {}",
                layer.name,
                member.layer()
            )));
        }
        let recon_error = reconstruction_error(&layer.weights, member)?;
        let output_error = layer
            .calibration
            .as_ref()
            .map(|pair| output_error(member, &pair.x, &pair.y))
            .transpose()?;
        per_layer.push(LayerReportRow {
            name: layer.name.clone(),
            original_params: count.original,
            compressed_params: count.compressed,
            rate: format!("{:.1}", count.original as f64 / count.compressed),
            recon_error,
            output_error,
        });
    }
    let rate = compression_rate(counts.total_original, counts.total_compressed)
        .map_err(|_| MetricsError::MemberMismatch("empty compressed model".to_string()))?;
    Ok(CompressionReport {
        tool_version: tool_version.to_string(),
        config: solved.config().clone(),
        per_layer,
        totals: ReportTotals {
            original_params: counts.total_original,
            compressed_params: counts.total_compressed,
            rate: format!("{rate:.1}"),
        },
        objective_trace: solved.objective_trace().to_vec(),
    })
}

/// Merges per-group reports from one run into a single document.
///
/// Totals are summed and the rate recomputed; objective traces are summed
/// epoch by epoch. All reports must share one configuration.
pub fn merge_reports(reports: Vec<CompressionReport>) -> Result<CompressionReport, MetricsError> {
    let mut iter = reports.into_iter();
    let mut merged = iter
        .next()
        .ok_or_else(|| MetricsError::MemberMismatch("no reports to merge".to_string()))?;
    for report in iter {
        if report.config != merged.config {
            return Err(MetricsError::MemberMismatch(
                "reports from different configurations".to_string(),
            ));
        }
        merged.per_layer.extend(report.per_layer);
        merged.totals.original_params += report.totals.original_params;
        merged.totals.compressed_params += report.totals.compressed_params;
        for (epoch, value) in report.objective_trace {
            match merged.objective_trace.iter_mut().find(|(e, _)| *e == epoch) {
                Some(entry) => entry.1 += value,
                None => merged.objective_trace.push((epoch, value)),
            }
        }
    }
    merged.objective_trace.sort_by_key(|&(epoch, _)| epoch);
    let rate = compression_rate(merged.totals.original_params, merged.totals.compressed_params)?;
    merged.totals.rate = format!("{rate:.1}");
    Ok(merged)
}
