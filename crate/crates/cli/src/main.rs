//! `braindec` — decoding-evaluation pipeline driver.
//!
//! Four file-to-file stages: `synth` builds a synthetic world, `decode`
//! trains the subject × model grid, `eval` scores predictions with
//! mean-average-rank retrieval, and `crossmodel` maps models onto each
//! other. Every stage is deterministic given its inputs, `--seed`, and
//! settings, for any `--workers` count.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use braindec_cli::{commands, GlobalOpts};
use braindec_core::decoder::PredictionMode;

#[derive(Parser)]
#[command(name = "braindec", version, about)]
struct Cli {
    /// Override the seed from the manifest / world spec.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for the decoder grid and crossmodel cells
    /// (default: all cores). Results are identical for any value.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Omit wall-clock timings from run records so reruns are
    /// byte-identical.
    #[arg(long, global = true)]
    reproducible: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    CrossValidated,
    InSample,
}

impl From<ModeArg> for PredictionMode {
    fn from(m: ModeArg) -> PredictionMode {
        match m {
            ModeArg::CrossValidated => PredictionMode::CrossValidated,
            ModeArg::InSample => PredictionMode::InSample,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world (matrices + manifest) from a world spec.
    Synth {
        /// World spec TOML.
        #[arg(long)]
        spec: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the decoder grid and write per-pair predictions.
    Decode {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::CrossValidated)]
        mode: ModeArg,
        /// Override the manifest's outer fold count.
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Score a completed prediction grid: per-model rank reports plus a
    /// ranking summary CSV.
    Eval {
        /// Directory holding the decode stage's outputs.
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the manifest's bootstrap replicate count.
        #[arg(long)]
        bootstrap: Option<usize>,
    },
    /// Pairwise model-to-model predictivity matrix (CSV + SVG heatmap).
    Crossmodel {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::InSample)]
        mode: ModeArg,
        /// Fixed regularization for every cell instead of per-cell
        /// cross-validated selection.
        #[arg(long)]
        alpha: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = GlobalOpts {
        seed: cli.seed,
        workers: cli.workers,
        reproducible: cli.reproducible,
    };
    let result = match cli.command {
        Command::Synth { spec, out } => commands::synth::run(&spec, &out, opts),
        Command::Decode {
            manifest,
            out,
            mode,
            folds,
        } => commands::decode::run(&manifest, &out, mode.into(), folds, opts),
        Command::Eval {
            predictions,
            manifest,
            out,
            bootstrap,
        } => commands::eval::run(&predictions, &manifest, &out, bootstrap, opts),
        Command::Crossmodel {
            manifest,
            out,
            mode,
            alpha,
        } => commands::crossmodel::run(&manifest, &out, mode.into(), alpha, opts),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.error);
            let mut source = std::error::Error::source(&e.error);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.code)
        }
    }
}
