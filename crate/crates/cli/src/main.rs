//! Command-line front end for the micik compression library.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{AnalyzeArgs, CompressArgs, ReportArgs, VerifyArgs};
use micik::solver::{CommonUpdate, SimilaritySign, SolverMode};
use settings::{DataTermChoice, RawSettings};

#[derive(Parser)]
#[command(name = "micik", version, about = "Low-rank plus sparse weight compression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct SolverFlags {
    /// Regularization exponent; lambda = 10^eta (scaled by the data in
    /// calibration mode). Open interval (-3, 3).
    #[arg(long)]
    eta: Option<f64>,
    /// Soft-threshold weight for the sparse component.
    #[arg(long)]
    lambda2: Option<f64>,
    /// Weight of the cross-layer row-similarity term.
    #[arg(long)]
    lambda_theta: Option<f64>,
    /// Total rank budget per layer.
    #[arg(long)]
    rank: Option<usize>,
    /// Fraction of the rank budget given to the shared component.
    #[arg(long)]
    common_ratio: Option<f64>,
    /// Sparse entry budget per layer.
    #[arg(long)]
    card: Option<usize>,
    /// Number of optimization epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Rows added to the factors per growth step.
    #[arg(long)]
    delta_m: Option<usize>,
    /// Solver mode: single, independent, shared, or micik.
    #[arg(long, value_parser = settings::parse_mode)]
    mode: Option<SolverMode>,
    /// attract pulls corresponding rows together, repel pushes them apart.
    #[arg(long, value_parser = settings::parse_sign)]
    similarity_sign: Option<SimilaritySign>,
    /// How the shared block advances: carry or average.
    #[arg(long, value_parser = settings::parse_update)]
    common_update: Option<CommonUpdate>,
    /// Project the sparse component onto the entry budget each epoch.
    #[arg(long, value_parser = settings::parse_switch)]
    enforce_cardinality: Option<bool>,
    /// Fit activations when present: auto, calibration, or weight-only.
    #[arg(long, value_parser = settings::parse_data_term)]
    data_term: Option<DataTermChoice>,
    /// Largest number of layers grouped together.
    #[arg(long)]
    max_group: Option<usize>,
    /// Seed for randomized initialization.
    #[arg(long)]
    seed: Option<u64>,
    /// Config file with `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl SolverFlags {
    fn into_raw(self) -> RawSettings {
        RawSettings {
            eta: self.eta,
            lambda2: self.lambda2,
            lambda_theta: self.lambda_theta,
            rank: self.rank,
            common_ratio: self.common_ratio,
            card: self.card,
            epochs: self.epochs,
            delta_m: self.delta_m,
            mode: self.mode,
            similarity_sign: self.similarity_sign,
            common_update: self.common_update,
            enforce_cardinality: self.enforce_cardinality,
            data_term: self.data_term,
            max_group: self.max_group,
            seed: self.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Decompose a model container into low-rank and sparse factors.
    Compress {
        /// Model container (.mcwb) to compress.
        #[arg(long = "in")]
        input: PathBuf,
        /// Output prefix; writes <out>.mcwb and <out>.report.json.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: SolverFlags,
    },
    /// Check a stored decomposition against the original model.
    Verify {
        /// Decomposition container to verify.
        #[arg(long)]
        decomposition: PathBuf,
        /// Model container the decomposition claims to compress.
        #[arg(long)]
        model: PathBuf,
        /// Report whose error values and budgets are re-checked.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Seed for the randomized application probes.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// List the closest mutual filter pairs of two layers as CSV.
    Analyze {
        /// Model container holding both layers.
        #[arg(long = "in")]
        input: PathBuf,
        /// First layer name.
        #[arg(long)]
        layer_a: String,
        /// Second layer name.
        #[arg(long)]
        layer_b: String,
        /// Keep only the closest N pairs.
        #[arg(long, default_value_t = 100)]
        top: usize,
        /// Write CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a stored report as a table.
    Report {
        /// Report document (.report.json) to print.
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn run(command: Command) -> Result<(), commands::CliError> {
    match command {
        Command::Compress { input, out, flags } => {
            let config = flags.config.clone();
            let mut raw = flags.into_raw();
            if let Some(path) = config {
                let text = std::fs::read_to_string(&path).map_err(|e| {
                    commands::CliError::Input(format!("cannot read {}: {e}", path.display()))
                })?;
                let file =
                    RawSettings::from_config_text(&text).map_err(commands::CliError::Input)?;
                raw = raw.or(file);
            }
            commands::cmd_compress(&CompressArgs {
                input,
                out,
                run: raw.into_run(),
            })
        }
        Command::Verify {
            decomposition,
            model,
            report,
            seed,
        } => commands::cmd_verify(&VerifyArgs {
            decomposition,
            model,
            report,
            seed,
        }),
        Command::Analyze {
            input,
            layer_a,
            layer_b,
            top,
            out,
        } => commands::cmd_analyze(&AnalyzeArgs {
            input,
            layer_a,
            layer_b,
            top,
            out,
        }),
        Command::Report { input } => commands::cmd_report(&ReportArgs { input }),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            eprintln!("{e}");
            return ExitCode::from(3);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
