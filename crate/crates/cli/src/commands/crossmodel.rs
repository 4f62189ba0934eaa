//! `braindec crossmodel`: the model-to-model predictivity matrix as CSV
//! plus an SVG heatmap.

use std::path::Path;

use braindec_core::crossmodel::{pairwise_predictivity, AlphaPolicy};
use braindec_core::decoder::PredictionMode;
use braindec_core::manifest::ExperimentManifest;
use braindec_core::matrix::{LabeledMatrix, MatrixFormat};
use braindec_core::Error;

use crate::commands::with_pool;
use crate::record::{sha256_hex_file, RunRecord, Stopwatch};
use crate::{CliError, GlobalOpts};

pub fn run(
    manifest_path: &Path,
    out: &Path,
    mode: PredictionMode,
    alpha: Option<f64>,
    opts: GlobalOpts,
) -> Result<(), CliError> {
    let mut watch = Stopwatch::new(!opts.reproducible);

    let mut manifest = ExperimentManifest::load(manifest_path).map_err(CliError::general)?;
    if let Some(seed) = opts.seed {
        manifest.eval.seed = seed;
    }
    let input_digest = sha256_hex_file(manifest_path).map_err(CliError::general)?;

    let models: Vec<(String, LabeledMatrix)> = manifest
        .models
        .iter()
        .map(|r| {
            let path = manifest.resolve(r);
            let m = LabeledMatrix::load(&path, MatrixFormat::from_path(&path))?;
            Ok((r.id.clone(), m.align(&manifest.stimulus_ids)?))
        })
        .collect::<Result<_, Error>>()
        .map_err(CliError::general)?;
    watch.lap("load");

    let policy = match alpha {
        Some(a) => AlphaPolicy::Fixed(a),
        None => AlphaPolicy::CrossValidated,
    };
    let cfg = manifest.eval.ridge_config();
    let pm = with_pool(opts.workers, || {
        pairwise_predictivity(
            &models,
            &cfg,
            mode,
            policy,
            manifest.eval.folds,
            manifest.eval.inner_folds,
            manifest.eval.seed,
        )
    })?
    .map_err(CliError::general)?;
    watch.lap("regress");

    std::fs::create_dir_all(out).map_err(|e| CliError::general(Error::io(out, e)))?;
    std::fs::write(out.join("predictivity.csv"), pm.to_csv_string())
        .map_err(|e| CliError::general(Error::io(out.join("predictivity.csv"), e)))?;
    std::fs::write(out.join("predictivity.svg"), pm.to_svg_string())
        .map_err(|e| CliError::general(Error::io(out.join("predictivity.svg"), e)))?;
    watch.lap("write");

    let record = RunRecord {
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        stage: "crossmodel".to_string(),
        seed: manifest.eval.seed,
        input_digest: Some(input_digest),
        timings_ms: watch.into_timings(),
        outputs: RunRecord::collect_outputs(
            out,
            &["predictivity.csv".to_string(), "predictivity.svg".to_string()],
        )
        .map_err(CliError::general)?,
    };
    record.write(out).map_err(CliError::general)?;

    println!(
        "computed {}x{} predictivity matrix into {}",
        pm.model_ids.len(),
        pm.model_ids.len(),
        out.display()
    );
    Ok(())
}
