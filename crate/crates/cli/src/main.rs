//! `mvprony`: reproducible experiments on top of the mvprony library.
//!
//! Exit codes: 0 success, 2 invalid configuration or input, 3 a numerical
//! stage failed.

// `!(x > 0.0)` is used on purpose: NaN must fail the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "mvprony",
    version,
    about = "Multivariate matrix pencil reconstruction and localization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write ground truth, exact samples and optionally a rendered image.
    Synth(SynthArgs),
    /// Recover parameters from a sample-table CSV.
    Reconstruct(ReconstructArgs),
    /// Localize point sources in an image (CSV matrix or PGM).
    Localize(LocalizeArgs),
    /// Monte Carlo check of the random-direction gap bound.
    McBound(McBoundArgs),
    /// Minimal eigenvalue gap of C_μ over a sphere grid.
    GapMap(GapMapArgs),
    /// Noisy recovery over separation presets and sampling orders.
    SweepSeparation(SweepArgs),
}

/// Reconstruction knobs shared by several commands.
#[derive(Args, Debug, Clone)]
struct ReconArgs {
    /// Model order; skips rank detection.
    #[arg(long = "M")]
    m: Option<usize>,
    /// Relative singular-value threshold for rank detection.
    #[arg(long)]
    rank_tol: Option<f64>,
    /// Relative eigenvalue-gap threshold for the random direction.
    #[arg(long, default_value_t = 1e-6)]
    gap_tol: f64,
    /// Resamples of the random direction before giving up.
    #[arg(long, default_value_t = 8)]
    retries: usize,
    #[arg(long, env = "PRONY_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Built-in preset name or path to a preset TOML.
    #[arg(long)]
    preset: Option<String>,
    /// Number of random sources (ignored with --preset).
    #[arg(long = "M", default_value_t = 3)]
    m: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Minimal node separation for random sources.
    #[arg(long)]
    min_sep: Option<f64>,
    #[arg(long, env = "PRONY_SEED", default_value_t = 0)]
    seed: u64,
    /// Sampling order of the exact sample table.
    #[arg(long)]
    n: Option<usize>,
    /// Pixels per side; renders an image when given (or set by the preset).
    #[arg(long = "P")]
    pixels: Option<usize>,
    /// PSF sharpness.
    #[arg(long)]
    b: Option<f64>,
    /// Add spatial noise to the image at this SNR.
    #[arg(long)]
    snr: Option<f64>,
    /// Render without noise even if the preset sets an SNR.
    #[arg(long, conflicts_with = "snr")]
    clean: bool,
    /// Constant offset added to the image.
    #[arg(long)]
    background: Option<f64>,
    #[arg(long, default_value_t = 1)]
    shift_radius: usize,
    #[arg(long, value_enum, default_value_t = ImageFormat::Both)]
    image_format: ImageFormat,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ImageFormat {
    Csv,
    Pgm,
    Both,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    /// Sample-table CSV.
    #[arg(long = "in")]
    input: PathBuf,
    /// Result CSV; the report goes to `<out>.report.txt`.
    #[arg(long)]
    out: PathBuf,
    /// Parameter CSV to score the result against.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[command(flatten)]
    recon: ReconArgs,
}

#[derive(Args, Debug)]
struct LocalizeArgs {
    /// Image: `.pgm` (P2/P5) or a CSV matrix.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// PSF sharpness in torus units; taken from --preset if omitted.
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, default_value_t = 4)]
    n: usize,
    /// Subtract the median pixel (default: on for PGM, off for CSV).
    #[arg(long, conflicts_with = "no_background")]
    background: bool,
    #[arg(long)]
    no_background: bool,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[command(flatten)]
    recon: ReconArgs,
}

#[derive(Args, Debug)]
struct McBoundArgs {
    /// Dimensions, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "2,3,5")]
    d: Vec<usize>,
    /// Band half-widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.1")]
    epsilon: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    /// Parallel blocks; part of the reproducibility key with the seed.
    #[arg(long, default_value_t = 8)]
    workers: usize,
    #[arg(long, env = "PRONY_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GapMapArgs {
    #[arg(long, default_value = "hopf-d2")]
    mode: String,
    /// Number of random nodes.
    #[arg(long = "M", default_value_t = 5)]
    m: usize,
    /// Sampling order for the pencil the map is computed from.
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    rows: usize,
    #[arg(long, default_value_t = 400)]
    cols: usize,
    /// Use exact nodes instead of a pencil built from samples.
    #[arg(long)]
    from_nodes: bool,
    /// Threshold for counting local minima in the header.
    #[arg(long, default_value_t = 1e-2)]
    threshold: f64,
    #[arg(long, env = "PRONY_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "sep-q283,sep-q057")]
    preset: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "1,4")]
    n: Vec<usize>,
    /// Noise realizations per cell.
    #[arg(long, default_value_t = 25)]
    trials: usize,
    /// Overrides the presets' SNR.
    #[arg(long)]
    snr: Option<f64>,
    /// Detect the model order instead of using the preset's source count.
    #[arg(long)]
    detect_rank: bool,
    #[arg(long, default_value_t = 1e-2)]
    rank_tol: f64,
    /// A trial fails above this max location error.
    #[arg(long, default_value_t = 0.05)]
    fail_above: f64,
    #[arg(long, default_value_t = 1)]
    shift_radius: usize,
    #[arg(long, env = "PRONY_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Reconstruct(a) => commands::reconstruct(a),
        Command::Localize(a) => commands::localize(a),
        Command::McBound(a) => commands::mc_bound(a),
        Command::GapMap(a) => commands::gap_map(a),
        Command::SweepSeparation(a) => commands::sweep_separation(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
