//! Layer tensors and the policy that turns them into solvable groups.
//!
//! Convolution weights `(k, k, d, n)` are unrolled filter-by-filter into an
//! `n x (k*k*d)` matrix, depth-major within each filter. Layers that share a
//! receptive field but differ in depth are made column-compatible by
//! splitting every filter into depth chunks of the group's common chunk
//! depth (the gcd of member depths). Fully connected weights pass through
//! unchanged.

use crate::matrixcore::DenseMatrix;
use crate::solver::Decomposition;

/// Errors raised while building tensors, matrices or groups.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LayerError {
    #[error("layer {layer}: kernel {k_h}x{k_w} is not square")]
    NonSquareKernel { layer: String, k_h: usize, k_w: usize },
    #[error("layer {layer}: every dimension must be nonzero")]
    ZeroDimension { layer: String },
    #[error("layer {layer}: data length {got} does not match shape ({expected} values)")]
    DataLength { layer: String, expected: usize, got: usize },
    #[error("layer {layer}: non-finite value {value} at flat index {index}")]
    NonFiniteValue { layer: String, index: usize, value: f64 },
    #[error("chunk depth {chunk} does not divide filter depth {depth}")]
    DepthNotDivisible { depth: usize, chunk: usize },
    #[error("matrix has {got} columns, expected {expected} for this shape")]
    ColumnsMismatch { expected: usize, got: usize },
    #[error("duplicate layer name {0}")]
    DuplicateLayerName(String),
    #[error("duplicate depth index {0}")]
    DuplicateDepthIndex(usize),
    #[error("max_group must be at least 1")]
    InvalidMaxGroup,
    #[error("no layers given")]
    EmptyModel,
    #[error("group starting at {group_head} is depth-chunked and cannot take calibration data")]
    CalibrationOnChunkedGroup { group_head: String },
    #[error("calibration pair count {got} does not cover all {expected} group members")]
    CalibrationCount { expected: usize, got: usize },
    #[error("layer {layer}: calibration {side} must be {expected_rows}x{samples}, got {got_rows}x{got_cols}")]
    CalibrationShape {
        layer: String,
        side: &'static str,
        expected_rows: usize,
        samples: usize,
        got_rows: usize,
        got_cols: usize,
    },
    #[error("layer {layer}: decomposition is {rows}x{cols}, incompatible with the target shape")]
    ReconstructShape { layer: String, rows: usize, cols: usize },
}

/// Original shape of a layer's weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerShape {
    /// Square convolution kernels: `k x k x d` weights for each of `n` filters.
    Conv { k: usize, d: usize, n: usize },
    /// Fully connected: `n` outputs by `p` inputs.
    Fc { n: usize, p: usize },
}

impl LayerShape {
    /// Number of stored weights.
    pub fn element_count(&self) -> usize {
        match *self {
            LayerShape::Conv { k, d, n } => k * k * d * n,
            LayerShape::Fc { n, p } => n * p,
        }
    }
}

/// A named weight tensor at a fixed position in the network.
///
/// Convolution data is laid out with the filter index fastest and kernel
/// row slowest: flat index `((kh*k + kw)*d + di)*n + fi`. Fully connected
/// data is row-major `n x p`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTensor {
    name: String,
    depth_index: usize,
    shape: LayerShape,
    data: Vec<f64>,
}

impl LayerTensor {
    /// Builds a convolution tensor; the kernel must be square.
    pub fn conv(
        name: &str,
        depth_index: usize,
        kernel: (usize, usize),
        depth: usize,
        filters: usize,
        data: Vec<f64>,
    ) -> Result<Self, LayerError> {
        let (k_h, k_w) = kernel;
        if k_h != k_w {
            return Err(LayerError::NonSquareKernel {
                layer: name.to_string(),
                k_h,
                k_w,
            });
        }
        Self::new(
            name,
            depth_index,
            LayerShape::Conv {
                k: k_h,
                d: depth,
                n: filters,
            },
            data,
        )
    }

    /// Builds a fully connected tensor with row-major `n x p` data.
    pub fn fully_connected(
        name: &str,
        depth_index: usize,
        outputs: usize,
        inputs: usize,
        data: Vec<f64>,
    ) -> Result<Self, LayerError> {
        Self::new(
            name,
            depth_index,
            LayerShape::Fc {
                n: outputs,
                p: inputs,
            },
            data,
        )
    }

    fn new(
        name: &str,
        depth_index: usize,
        shape: LayerShape,
        data: Vec<f64>,
    ) -> Result<Self, LayerError> {
        let dims_ok = match shape {
            LayerShape::Conv { k, d, n } => k > 0 && d > 0 && n > 0,
            LayerShape::Fc { n, p } => n > 0 && p > 0,
        };
        if !dims_ok {
            return Err(LayerError::ZeroDimension {
                layer: name.to_string(),
            });
        }
        if data.len() != shape.element_count() {
            return Err(LayerError::DataLength {
                layer: name.to_string(),
                expected: shape.element_count(),
                got: data.len(),
            });
        }
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(LayerError::NonFiniteValue {
                layer: name.to_string(),
                index,
                value,
            });
        }
        Ok(Self {
            name: name.to_string(),
            depth_index,
            shape,
            data,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn depth_index(&self) -> usize {
        self.depth_index
    }

    pub fn shape(&self) -> LayerShape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_conv(&self) -> bool {
        matches!(self.shape, LayerShape::Conv { .. })
    }
}

/// Unrolls a layer into its weight matrix.
///
/// Convolution: one row per filter, columns depth-major then kernel row
/// then kernel column, giving `n x (k*k*d)`. Fully connected: the `n x p`
/// data unchanged.
pub fn flatten_layer(tensor: &LayerTensor) -> DenseMatrix {
    match tensor.shape {
        LayerShape::Fc { n, p } => DenseMatrix::from_row_major(n, p, &tensor.data)
            .expect("tensor data is validated at construction"),
        LayerShape::Conv { k, d, n } => {
            let mut out = DenseMatrix::zeros(n, k * k * d);
            for pos in 0..k * k {
                for di in 0..d {
                    let col = di * k * k + pos;
                    for fi in 0..n {
                        out.set(fi, col, tensor.data[(pos * d + di) * n + fi]);
                    }
                }
            }
            out
        }
    }
}

/// Splits each filter row of a flattened convolution into depth chunks.
///
/// For chunk depth `g` dividing `d`, filter `i` becomes `d/g` rows: chunk
/// `c` sits at row `i*(d/g) + c` and holds the kernel slices for input
/// channels `c*g .. (c+1)*g`. The result is `(n*d/g) x (k*k*g)`; `g = d`
/// returns the input unchanged.
pub fn chunk_layer(
    w: &DenseMatrix,
    k: usize,
    d: usize,
    g: usize,
) -> Result<DenseMatrix, LayerError> {
    if g == 0 || d % g != 0 {
        return Err(LayerError::DepthNotDivisible { depth: d, chunk: g });
    }
    if w.cols() != k * k * d {
        return Err(LayerError::ColumnsMismatch {
            expected: k * k * d,
            got: w.cols(),
        });
    }
    if g == d {
        return Ok(w.clone());
    }
    let factor = d / g;
    let n = w.rows();
    let mut out = DenseMatrix::zeros(n * factor, k * k * g);
    for fi in 0..n {
        for c in 0..factor {
            for dl in 0..g {
                for pos in 0..k * k {
                    let value = w.get(fi, (c * g + dl) * k * k + pos);
                    out.set(fi * factor + c, dl * k * k + pos, value);
                }
            }
        }
    }
    Ok(out)
}

fn unchunk_layer(chunked: &DenseMatrix, k: usize, d: usize, g: usize, n: usize) -> DenseMatrix {
    let factor = d / g;
    let mut out = DenseMatrix::zeros(n, k * k * d);
    for fi in 0..n {
        for c in 0..factor {
            for dl in 0..g {
                for pos in 0..k * k {
                    let value = chunked.get(fi * factor + c, dl * k * k + pos);
                    out.set(fi, (c * g + dl) * k * k + pos, value);
                }
            }
        }
    }
    out
}

/// A layer prepared for the solver: flattened, possibly depth-chunked.
#[derive(Debug, Clone)]
pub struct LayerMatrix {
    name: String,
    depth_index: usize,
    shape: LayerShape,
    weights: DenseMatrix,
    chunk_factor: usize,
}

impl LayerMatrix {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn depth_index(&self) -> usize {
        self.depth_index
    }

    pub fn shape(&self) -> LayerShape {
        self.shape
    }

    /// The matrix handed to the solver (chunked when `chunk_factor > 1`).
    pub fn weights(&self) -> &DenseMatrix {
        &self.weights
    }

    /// Rows per original filter after chunking (1 when unchunked).
    pub fn chunk_factor(&self) -> usize {
        self.chunk_factor
    }
}

/// Calibration inputs and responses for one layer.
///
/// `x` holds one column per sample in the layer's (chunked) input space;
/// `y` holds the matching responses, one column per sample.
#[derive(Debug, Clone)]
pub struct CalibrationPair {
    pub x: DenseMatrix,
    pub y: DenseMatrix,
}

/// Layers solved together, sharing column space and the common block.
#[derive(Debug, Clone)]
pub struct LayerGroup {
    members: Vec<LayerMatrix>,
    receptive_field: Option<usize>,
    chunk_depth: Option<usize>,
    calibration: Option<Vec<CalibrationPair>>,
}

impl LayerGroup {
    pub fn members(&self) -> &[LayerMatrix] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Kernel size shared by the members (`None` for fully connected).
    pub fn receptive_field(&self) -> Option<usize> {
        self.receptive_field
    }

    /// Common chunk depth `g` (`None` for fully connected).
    pub fn chunk_depth(&self) -> Option<usize> {
        self.chunk_depth
    }

    /// True when any member was split into more than one chunk per filter.
    pub fn is_chunked(&self) -> bool {
        self.members.iter().any(|m| m.chunk_factor > 1)
    }

    pub fn calibration(&self) -> Option<&[CalibrationPair]> {
        self.calibration.as_deref()
    }

    /// Attaches one calibration pair per member, in member order.
    ///
    /// Chunked groups cannot take calibration data: the chunked input space
    /// has no sampled activations. All members must be covered.
    pub fn attach_calibration(&mut self, pairs: Vec<CalibrationPair>) -> Result<(), LayerError> {
        if self.is_chunked() {
            return Err(LayerError::CalibrationOnChunkedGroup {
                group_head: self.members[0].name.clone(),
            });
        }
        if pairs.len() != self.members.len() {
            return Err(LayerError::CalibrationCount {
                expected: self.members.len(),
                got: pairs.len(),
            });
        }
        for (member, pair) in self.members.iter().zip(&pairs) {
            let samples = pair.x.cols();
            if pair.x.rows() != member.weights.cols() || samples == 0 {
                return Err(LayerError::CalibrationShape {
                    layer: member.name.clone(),
                    side: "x",
                    expected_rows: member.weights.cols(),
                    samples,
                    got_rows: pair.x.rows(),
                    got_cols: pair.x.cols(),
                });
            }
            if pair.y.rows() != member.weights.rows() || pair.y.cols() != samples {
                return Err(LayerError::CalibrationShape {
                    layer: member.name.clone(),
                    side: "y",
                    expected_rows: member.weights.rows(),
                    samples,
                    got_rows: pair.y.rows(),
                    got_cols: pair.y.cols(),
                });
            }
        }
        self.calibration = Some(pairs);
        Ok(())
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Partitions layers into solve groups and prepares member matrices.
///
/// Policy: fully connected layers and depth-3 convolutions are solved
/// alone; remaining convolutions are classed by kernel size and split, in
/// network order within each class, into runs of at most `max_group`
/// members. A conv group's chunk depth is the gcd of its member depths, so
/// every member lands on `k*k*g` columns. Groups are returned in network
/// order of their first member.
pub fn group_layers(
    layers: &[LayerTensor],
    max_group: usize,
) -> Result<Vec<LayerGroup>, LayerError> {
    if max_group == 0 {
        return Err(LayerError::InvalidMaxGroup);
    }
    if layers.is_empty() {
        return Err(LayerError::EmptyModel);
    }
    let mut ordered: Vec<&LayerTensor> = layers.iter().collect();
    ordered.sort_by_key(|t| t.depth_index);
    for pair in ordered.windows(2) {
        if pair[0].depth_index == pair[1].depth_index {
            return Err(LayerError::DuplicateDepthIndex(pair[0].depth_index));
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for t in &ordered {
        if !seen.insert(t.name.clone()) {
            return Err(LayerError::DuplicateLayerName(t.name.clone()));
        }
    }

    // Singleton layers keep their natural shape; conv classes are keyed by
    // kernel size and filled in network order.
    let mut singletons: Vec<&LayerTensor> = Vec::new();
    let mut classes: std::collections::BTreeMap<usize, Vec<&LayerTensor>> =
        std::collections::BTreeMap::new();
    for t in &ordered {
        match t.shape {
            LayerShape::Fc { .. } => singletons.push(t),
            LayerShape::Conv { d: 3, .. } => singletons.push(t),
            LayerShape::Conv { k, .. } => classes.entry(k).or_default().push(t),
        }
    }

    let mut runs: Vec<Vec<&LayerTensor>> = Vec::new();
    for t in singletons {
        runs.push(vec![t]);
    }
    for members in classes.values() {
        for run in members.chunks(max_group) {
            runs.push(run.to_vec());
        }
    }
    runs.sort_by_key(|run| run[0].depth_index);

    let mut groups = Vec::with_capacity(runs.len());
    for run in runs {
        groups.push(build_group(&run)?);
    }
    Ok(groups)
}

fn build_group(run: &[&LayerTensor]) -> Result<LayerGroup, LayerError> {
    match run[0].shape {
        LayerShape::Fc { n, p } => {
            debug_assert_eq!(run.len(), 1, "fc layers are always singletons");
            let t = run[0];
            let member = LayerMatrix {
                name: t.name.clone(),
                depth_index: t.depth_index,
                shape: LayerShape::Fc { n, p },
                weights: flatten_layer(t),
                chunk_factor: 1,
            };
            Ok(LayerGroup {
                members: vec![member],
                receptive_field: None,
                chunk_depth: None,
                calibration: None,
            })
        }
        LayerShape::Conv { k, .. } => {
            let g = run
                .iter()
                .map(|t| match t.shape {
                    LayerShape::Conv { d, .. } => d,
                    LayerShape::Fc { .. } => unreachable!("conv run"),
                })
                .fold(0, gcd);
            let mut members = Vec::with_capacity(run.len());
            for t in run {
                let d = match t.shape {
                    LayerShape::Conv { d, .. } => d,
                    LayerShape::Fc { .. } => unreachable!("conv run"),
                };
                let weights = chunk_layer(&flatten_layer(t), k, d, g)?;
                members.push(LayerMatrix {
                    name: t.name.clone(),
                    depth_index: t.depth_index,
                    shape: t.shape,
                    weights,
                    chunk_factor: d / g,
                });
            }
            Ok(LayerGroup {
                members,
                receptive_field: Some(k),
                chunk_depth: Some(g),
                calibration: None,
            })
        }
    }
}

/// Rebuilds a layer tensor from solved factors.
///
/// Materializes `U [V_common; V_individual] + S`, undoes depth chunking
/// and re-rolls the filter matrix into the original tensor layout.
pub fn reconstruct_layer(
    decomposition: &Decomposition,
    shape: LayerShape,
    depth_index: usize,
) -> Result<LayerTensor, LayerError> {
    let layer = decomposition.layer().to_string();
    let w_hat = decomposition.reconstruct();
    let mismatch = || LayerError::ReconstructShape {
        layer: layer.clone(),
        rows: w_hat.rows(),
        cols: w_hat.cols(),
    };
    match shape {
        LayerShape::Fc { n, p } => {
            if w_hat.rows() != n || w_hat.cols() != p {
                return Err(mismatch());
            }
            LayerTensor::fully_connected(&layer, depth_index, n, p, w_hat.row_major())
        }
        LayerShape::Conv { k, d, n } => {
            if k == 0 || w_hat.cols() % (k * k) != 0 {
                return Err(mismatch());
            }
            let g = w_hat.cols() / (k * k);
            if g == 0 || d % g != 0 || w_hat.rows() != n * (d / g) {
                return Err(mismatch());
            }
            let w = unchunk_layer(&w_hat, k, d, g, n);
            let mut data = vec![0.0; k * k * d * n];
            for pos in 0..k * k {
                for di in 0..d {
                    for fi in 0..n {
                        data[(pos * d + di) * n + fi] = w.get(fi, di * k * k + pos);
                    }
                }
            }
            LayerTensor::conv(&layer, depth_index, (k, k), d, n, data)
        }
    }
}
