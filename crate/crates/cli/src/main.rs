//! `ieat`: run embedding association test suites and their sweep analyses.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ieat_core::analysis::{DEFAULT_GRID_MAX, DEFAULT_GRID_MIN, DEFAULT_GRID_POINTS};

#[derive(Parser, Debug)]
#[command(
    name = "ieat",
    version,
    about = "Embedding association tests for image-embedding spaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every test in a suite manifest and write a results document.
    Run(RunArgs),
    /// Significance-threshold curves, effect summaries and the effect matrix
    /// over one or more results documents.
    Sweep(SweepArgs),
    /// Run a suite once per layer directory and count significant tests per layer.
    Layers(LayersArgs),
    /// Write a synthetic planted-bias test as concept files plus a manifest.
    Synth(SynthArgs),
    /// Write the bundled 15-test manifest skeleton.
    Manifest {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Sigma {
    Population,
    Sample,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum TailArg {
    Strict,
    #[value(name = "ge_plus_one")]
    GePlusOne,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum StimulusFormat {
    Text,
    Emb1,
}

/// Options shared by `run` and `layers`. Unset options fall back to the
/// manifest's `options` block, then to built-in defaults.
#[derive(Args, Debug, Clone)]
struct EngineArgs {
    #[arg(long, env = "IEAT_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    sample_count: Option<u64>,
    #[arg(long)]
    exact_threshold: Option<u64>,
    /// Significance level; repeatable. 0.05 is always reported.
    #[arg(long = "alpha")]
    alphas: Vec<f64>,
    #[arg(long, env = "IEAT_WORKERS")]
    workers: Option<usize>,
    #[arg(long, value_enum, default_value_t = Sigma::Population)]
    sigma: Sigma,
    #[arg(long, value_enum, default_value_t = TailArg::Strict)]
    tail: TailArg,
    /// L2-normalize every embedding before testing.
    #[arg(long)]
    normalize: bool,
    /// Model label stamped on every result; defaults to the manifest's.
    #[arg(long)]
    model_tag: Option<String>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    suite: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Output format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    layer: Option<u32>,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Results documents (JSON); repeatable, one per model.
    #[arg(long = "results", required = true)]
    results: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long, default_value_t = DEFAULT_GRID_MIN)]
    grid_min: f64,
    #[arg(long, default_value_t = DEFAULT_GRID_MAX)]
    grid_max: f64,
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    grid_points: usize,
    /// Level used to mark significant cells in the effect matrix.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Also write the model-by-test effect matrix as CSV.
    #[arg(long)]
    matrix: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LayersArgs {
    #[arg(long)]
    suite: PathBuf,
    /// Directory with one subdirectory per layer (`layer_01`, `2`, ...),
    /// each holding the concept files named in the manifest.
    #[arg(long)]
    layers_root: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 8)]
    n_targets: usize,
    #[arg(long, default_value_t = 8)]
    n_attributes: usize,
    /// Planted bias strength in [0, 1].
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    beta: f64,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, env = "IEAT_SEED", default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "S1")]
    test_id: String,
    #[arg(long, value_enum, default_value_t = StimulusFormat::Text)]
    format: StimulusFormat,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(commands::EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let status = match cli.command {
        Command::Run(args) => commands::run(args),
        Command::Sweep(args) => commands::sweep(args),
        Command::Layers(args) => commands::layers(args),
        Command::Synth(args) => commands::synth(args),
        Command::Manifest { out } => commands::manifest(&out),
    };
    match status {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
