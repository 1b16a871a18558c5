//! The four subcommands: compress a model container, verify a
//! decomposition against its model, analyze filter correspondences, and
//! render a report as a table.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use micik::layermodel::{group_layers, CalibrationPair, LayerShape, LayerTensor};
use micik::matrixcore::DenseMatrix;
use micik::metrics::{
    apply_compressed, compression_report, find_correspondences, merge_reports,
    reconstruction_error, CompressionReport,
};
use micik::solver::{decompose_problem, GroupProblem, SolverMode};
use micik::storage::{
    matrix_entry, matrix_from_entry, read_container, read_report, sparse_entry,
    sparse_from_entry, tensor_from_entry, write_container, write_report, Entry,
};
use micik::Decomposition;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::settings::{DataTermChoice, RunSettings};

/// Command failures, split by exit code: domain errors exit 2, input and
/// parse errors exit 3.
#[derive(Debug)]
pub enum CliError {
    Domain(String),
    Input(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 2,
            CliError::Input(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Domain(message) | CliError::Input(message) => write!(f, "{message}"),
        }
    }
}

impl From<micik::layermodel::LayerError> for CliError {
    fn from(e: micik::layermodel::LayerError) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<micik::solver::SolverError> for CliError {
    fn from(e: micik::solver::SolverError) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<micik::metrics::MetricsError> for CliError {
    fn from(e: micik::metrics::MetricsError) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<micik::storage::StorageError> for CliError {
    fn from(e: micik::storage::StorageError) -> Self {
        CliError::Input(e.to_string())
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

/// One layer of a model container: its tensor plus optional calibration.
pub struct ModelLayer {
    pub tensor: LayerTensor,
    pub x: Option<DenseMatrix>,
    pub y: Option<DenseMatrix>,
}

/// Interprets container entries under the `<layer>.W/.X/.Y` convention.
///
/// `.W` entries define the layers, in container order; `.X`/`.Y` entries
/// attach activations to the matching layer. Entries under other names are
/// ignored.
pub fn parse_model(entries: &[Entry]) -> Result<Vec<ModelLayer>, CliError> {
    let mut layers: Vec<ModelLayer> = Vec::new();
    for entry in entries {
        if let Some(prefix) = entry.name.strip_suffix(".W") {
            let tensor = tensor_from_entry(entry, prefix, layers.len())?;
            layers.push(ModelLayer {
                tensor,
                x: None,
                y: None,
            });
        }
    }
    for entry in entries {
        let Some((prefix, suffix)) = entry.name.rsplit_once('.') else {
            continue;
        };
        if suffix != "X" && suffix != "Y" {
            continue;
        }
        let layer = layers
            .iter_mut()
            .find(|l| l.tensor.name() == prefix)
            .ok_or_else(|| {
                CliError::Input(format!(
                    "calibration entry {} has no matching {prefix}.W layer",
                    entry.name
                ))
            })?;
        let matrix = matrix_from_entry(entry)?;
        match suffix {
            "X" => layer.x = Some(matrix),
            _ => layer.y = Some(matrix),
        }
    }
    for layer in &layers {
        if layer.x.is_some() != layer.y.is_some() {
            return Err(CliError::Input(format!(
                "layer {} has only one side of its calibration pair",
                layer.tensor.name()
            )));
        }
    }
    Ok(layers)
}

pub struct CompressArgs {
    pub input: PathBuf,
    pub out: PathBuf,
    pub run: RunSettings,
}

/// Groups the model, solves every group, and writes `<out>.mcwb` plus
/// `<out>.report.json`.
pub fn cmd_compress(args: &CompressArgs) -> Result<(), CliError> {
    let mut config = args.run.solver.clone();
    let max_group = if config.mode == SolverMode::Single {
        log::info!("single mode solves every layer alone");
        1
    } else {
        args.run.max_group
    };
    let entries = read_container(&read_file(&args.input)?)?;
    let model = parse_model(&entries)?;
    let tensors: Vec<LayerTensor> = model.iter().map(|l| l.tensor.clone()).collect();
    let mut groups = group_layers(&tensors, max_group)?;

    let all_calibrated = model.iter().all(|l| l.x.is_some());
    let any_chunked = groups.iter().any(|g| g.is_chunked());
    let use_calibration = match args.run.data_term {
        DataTermChoice::Calibration => true,
        DataTermChoice::WeightOnly => false,
        DataTermChoice::Auto => {
            let usable = all_calibrated && !any_chunked;
            log::info!(
                "data term: {}",
                if usable {
                    "calibration (all layers ship activations)"
                } else {
                    "weights (no full calibration coverage)"
                }
            );
            usable
        }
    };
    config.data_term = if use_calibration {
        micik::solver::DataTermMode::Calibration
    } else {
        micik::solver::DataTermMode::WeightOnly
    };
    if use_calibration {
        for group in &mut groups {
            let pairs = group
                .members()
                .iter()
                .map(|member| {
                    let layer = model
                        .iter()
                        .find(|l| l.tensor.name() == member.name())
                        .expect("groups are built from the model's layers");
                    match (&layer.x, &layer.y) {
                        (Some(x), Some(y)) => Ok(CalibrationPair {
                            x: x.clone(),
                            y: y.clone(),
                        }),
                        _ => Err(CliError::Domain(format!(
                            "layer {} has no calibration data",
                            member.name()
                        ))),
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            group.attach_calibration(pairs)?;
        }
    }

    log::info!(
        "compressing {} layers in {} groups",
        tensors.len(),
        groups.len()
    );
    let mut out_entries = Vec::new();
    let mut reports = Vec::new();
    for group in &groups {
        let problem = GroupProblem::from_group(group);
        let solved = decompose_problem(&problem, &config)?;
        reports.push(compression_report(
            &problem,
            &solved,
            env!("CARGO_PKG_VERSION"),
        )?);
        for member in solved.members() {
            let name = member.layer();
            out_entries.push(matrix_entry(&format!("{name}.U"), member.u()));
            out_entries.push(matrix_entry(&format!("{name}.Vc"), member.v_common()));
            out_entries.push(matrix_entry(&format!("{name}.Vi"), member.v_individual()));
            out_entries.push(sparse_entry(&format!("{name}.S"), member.s()));
        }
    }
    let report = merge_reports(reports)?;
    let container = write_container(&out_entries)?;
    write_file(&PathBuf::from(format!("{}.mcwb", args.out.display())), &container)?;
    write_file(
        &PathBuf::from(format!("{}.report.json", args.out.display())),
        write_report(&report).as_bytes(),
    )?;
    log::info!(
        "total {} -> {} parameters ({}X)",
        report.totals.original_params,
        report.totals.compressed_params,
        report.totals.rate
    );
    Ok(())
}

pub struct VerifyArgs {
    pub decomposition: PathBuf,
    pub model: PathBuf,
    pub report: Option<PathBuf>,
    pub seed: u64,
}

fn chunked_weights(tensor: &LayerTensor, factor_cols: usize) -> Result<DenseMatrix, CliError> {
    let flat = micik::layermodel::flatten_layer(tensor);
    match tensor.shape() {
        LayerShape::Fc { .. } => Ok(flat),
        LayerShape::Conv { k, d, .. } => {
            let field = k * k;
            if factor_cols % field != 0 || d % (factor_cols / field) != 0 {
                return Err(CliError::Domain(format!(
                    "layer {}: factors have {factor_cols} columns, impossible for a {k}x{k}x{d} layer",
                    tensor.name()
                )));
            }
            Ok(micik::layermodel::chunk_layer(&flat, k, d, factor_cols / field)?)
        }
    }
}

/// Recomputes errors and budget checks for a stored decomposition; any
/// violation fails the run.
pub fn cmd_verify(args: &VerifyArgs) -> Result<(), CliError> {
    let model_entries = read_container(&read_file(&args.model)?)?;
    let model = parse_model(&model_entries)?;
    let entries = read_container(&read_file(&args.decomposition)?)?;
    let report = match &args.report {
        Some(path) => {
            let text = String::from_utf8(read_file(path)?)
                .map_err(|_| CliError::Input(format!("{} is not UTF-8", path.display())))?;
            Some(read_report(&text)?)
        }
        None => None,
    };

    let find = |name: String| -> Result<&Entry, CliError> {
        entries.iter().find(|e| e.name == name).ok_or_else(|| {
            CliError::Domain(format!("decomposition is missing entry {name}"))
        })
    };
    for entry in &entries {
        if let Some(prefix) = entry.name.strip_suffix(".U") {
            if !model.iter().any(|l| l.tensor.name() == prefix) {
                return Err(CliError::Domain(format!(
                    "decomposition has layer {prefix} that the model lacks"
                )));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut violations = 0usize;
    let mut fail = |layer: &str, detail: String| {
        println!("FAIL {layer}: {detail}");
        violations += 1;
    };
    for layer in &model {
        let name = layer.tensor.name().to_string();
        let u = matrix_from_entry(find(format!("{name}.U"))?)?;
        let vc = matrix_from_entry(find(format!("{name}.Vc"))?)?;
        let vi = matrix_from_entry(find(format!("{name}.Vi"))?)?;
        let s = sparse_from_entry(find(format!("{name}.S"))?)?;
        let decomposition = Decomposition::new(&name, u, Arc::new(vc), vi, s)
            .map_err(|e| CliError::Domain(e.to_string()))?;
        let weights = chunked_weights(&layer.tensor, decomposition.v_individual().cols())?;
        let recon = reconstruction_error(&weights, &decomposition)?;
        if !recon.is_finite() {
            fail(&name, format!("reconstruction error is {recon}"));
        }

        let dense = decomposition.reconstruct();
        for _ in 0..100 {
            let x: Vec<f64> = (0..weights.cols())
                .map(|_| rng.sample(StandardNormal))
                .collect();
            let fast = apply_compressed(&decomposition, &x)?;
            let reference = dense.mul_vec(&x);
            let err: f64 = fast
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let scale: f64 = reference.iter().map(|v| v * v).sum::<f64>().sqrt();
            if err > 1e-10 * scale.max(1.0) {
                fail(&name, format!("factored application drifts by {err}"));
                break;
            }
        }

        if let Some(report) = &report {
            let config = &report.config;
            if decomposition.rank() > config.rank {
                fail(
                    &name,
                    format!(
                        "rank {} exceeds the configured budget {}",
                        decomposition.rank(),
                        config.rank
                    ),
                );
            }
            if config.enforce_cardinality && decomposition.card() > config.card {
                fail(
                    &name,
                    format!(
                        "{} sparse entries exceed the budget {}",
                        decomposition.card(),
                        config.card
                    ),
                );
            }
            match report.per_layer.iter().find(|row| row.name == name) {
                None => fail(&name, "layer is missing from the report".to_string()),
                Some(row) => {
                    if (row.recon_error - recon).abs() > 1e-12 {
                        fail(
                            &name,
                            format!(
                                "reconstruction error {recon} disagrees with the reported {}",
                                row.recon_error
                            ),
                        );
                    }
                    if let Some(reported) = row.output_error {
                        match (&layer.x, &layer.y) {
                            (Some(x), Some(y)) => {
                                let output =
                                    micik::metrics::output_error(&decomposition, x, y)?;
                                if (output - reported).abs() > 1e-12 {
                                    fail(
                                        &name,
                                        format!(
                                            "output error {output} disagrees with the reported {reported}"
                                        ),
                                    );
                                }
                            }
                            _ => fail(
                                &name,
                                "report has an output error but the model has no calibration"
                                    .to_string(),
                            ),
                        }
                    }
                }
            }
        }
        println!("ok {name} recon {recon:.6e}");
    }
    if violations > 0 {
        Err(CliError::Domain(format!(
            "verification failed with {violations} violation(s)"
        )))
    } else {
        println!("PASS {} layers", model.len());
        Ok(())
    }
}

pub struct AnalyzeArgs {
    pub input: PathBuf,
    pub layer_a: String,
    pub layer_b: String,
    pub top: usize,
    pub out: Option<PathBuf>,
}

/// Writes the closest mutual filter pairs of two layers as CSV.
pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    let entries = read_container(&read_file(&args.input)?)?;
    let model = parse_model(&entries)?;
    let tensor = |name: &str| {
        model
            .iter()
            .map(|l| &l.tensor)
            .find(|t| t.name() == name)
            .ok_or_else(|| CliError::Domain(format!("no layer named {name}")))
    };
    let mut pairs = find_correspondences(tensor(&args.layer_a)?, tensor(&args.layer_b)?)?;
    log::info!(
        "{} mutual pairs between {} and {}",
        pairs.len(),
        args.layer_a,
        args.layer_b
    );
    pairs.truncate(args.top);
    let mut csv = String::from("index_a,index_b,distance\n");
    for (i, j, distance) in &pairs {
        csv.push_str(&format!("{i},{j},{distance}\n"));
    }
    match &args.out {
        Some(path) => write_file(path, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    Ok(())
}

pub struct ReportArgs {
    pub input: PathBuf,
}

/// Renders a report document as a table with one line per layer and a
/// totals line.
pub fn render_report(report: &CompressionReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<24} {:>10} {:>12} {:>7} {:>12} {:>12}\n",
        "layer", "original", "compressed", "rate", "recon", "output"
    ));
    for row in &report.per_layer {
        let output = row
            .output_error
            .map(|e| format!("{e:.3e}"))
            .unwrap_or_else(|| "-".to_string());
        out.push_str(&format!(
            "{:<24} {:>10} {:>12} {:>6}X {:>12} {:>12}\n",
            row.name,
            micik::metrics::humanize_count(row.original_params),
            micik::metrics::humanize_count(row.compressed_params.round() as u64),
            row.rate,
            format!("{:.3e}", row.recon_error),
            output
        ));
    }
    if !report.per_layer.is_empty() {
        out.push_str(&format!(
            "Total {} {} {}X\n",
            micik::metrics::humanize_count(report.totals.original_params),
            micik::metrics::humanize_count(report.totals.compressed_params),
            report.totals.rate
        ));
    }
    out
}

/// Prints a stored report as a human-readable table.
pub fn cmd_report(args: &ReportArgs) -> Result<(), CliError> {
    let text = String::from_utf8(read_file(&args.input)?)
        .map_err(|_| CliError::Input(format!("{} is not UTF-8", args.input.display())))?;
    let report = read_report(&text)?;
    print!("{}", render_report(&report));
    Ok(())
}
