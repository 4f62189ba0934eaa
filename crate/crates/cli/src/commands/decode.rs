//! `braindec decode`: one prediction file per subject–model pair, then the
//! run record as commit marker. Exit code 3 identifies the failing pair.

use std::path::Path;

use braindec_core::decoder::{self, PredictionMode};
use braindec_core::manifest::ExperimentManifest;
use braindec_core::Error;

use crate::commands::with_pool;
use crate::record::{sha256_hex_file, RunRecord, Stopwatch};
use crate::{CliError, GlobalOpts};

pub fn run(
    manifest_path: &Path,
    out: &Path,
    mode: PredictionMode,
    folds: Option<usize>,
    opts: GlobalOpts,
) -> Result<(), CliError> {
    let mut watch = Stopwatch::new(!opts.reproducible);

    let mut manifest = ExperimentManifest::load(manifest_path).map_err(CliError::general)?;
    if let Some(seed) = opts.seed {
        manifest.eval.seed = seed;
    }
    if let Some(folds) = folds {
        manifest.eval.folds = folds;
    }
    manifest.eval.validate().map_err(CliError::general)?;
    let input_digest = sha256_hex_file(manifest_path).map_err(CliError::general)?;
    watch.lap("load_manifest");

    let predictions = with_pool(opts.workers, || decoder::run_grid(&manifest, mode))?
        .map_err(|error| match &error {
            Error::JobFailed { .. } | Error::EntityMatrix { .. } => CliError { code: 3, error },
            _ => CliError::general(error),
        })?;
    watch.lap("decode");

    std::fs::create_dir_all(out).map_err(|e| CliError::general(Error::io(out, e)))?;
    let mut files = Vec::with_capacity(predictions.len() * 2);
    for p in &predictions {
        p.save(out).map_err(CliError::general)?;
        let stem = decoder::prediction_stem(&p.subject_id, &p.model_id);
        files.push(format!("{stem}.rdmx"));
        files.push(format!("{stem}.toml"));
    }
    watch.lap("write");

    let record = RunRecord {
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        stage: "decode".to_string(),
        seed: manifest.eval.seed,
        input_digest: Some(input_digest),
        timings_ms: watch.into_timings(),
        outputs: RunRecord::collect_outputs(out, &files).map_err(CliError::general)?,
    };
    record.write(out).map_err(CliError::general)?;

    println!(
        "decoded {} pairs into {}",
        predictions.len(),
        out.display()
    );
    Ok(())
}
