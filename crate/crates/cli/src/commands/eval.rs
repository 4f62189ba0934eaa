//! `braindec eval`: per-model rank reports, a flat per-sentence ranks CSV,
//! and the ranking summary CSV sorted by MAR. Exit code 4 when the
//! prediction grid is incomplete.

use std::fmt::Write as _;
use std::path::Path;

use braindec_core::decoder::{self, PredictionSet};
use braindec_core::manifest::ExperimentManifest;
use braindec_core::matrix::{LabeledMatrix, MatrixFormat};
use braindec_core::rankeval::{mean_average_rank, RankReport};
use braindec_core::Error;

use crate::record::{sha256_hex_file, RunRecord, Stopwatch};
use crate::{CliError, GlobalOpts};

pub fn run(
    predictions_dir: &Path,
    manifest_path: &Path,
    out: &Path,
    bootstrap: Option<usize>,
    opts: GlobalOpts,
) -> Result<(), CliError> {
    let mut watch = Stopwatch::new(!opts.reproducible);

    let mut manifest = ExperimentManifest::load(manifest_path).map_err(CliError::general)?;
    if let Some(seed) = opts.seed {
        manifest.eval.seed = seed;
    }
    if let Some(b) = bootstrap {
        manifest.eval.bootstrap_replicates = b;
    }
    manifest.eval.validate().map_err(CliError::general)?;
    let input_digest = sha256_hex_file(manifest_path).map_err(CliError::general)?;

    let missing = decoder::missing_pairs(&manifest, predictions_dir);
    if !missing.is_empty() {
        let listing: Vec<String> = missing
            .iter()
            .map(|(s, m)| format!("({s}, {m})"))
            .collect();
        return Err(CliError {
            code: 4,
            error: Error::InvalidConfig(format!(
                "prediction grid incomplete, missing {} pair(s): {}",
                missing.len(),
                listing.join(", ")
            )),
        });
    }
    watch.lap("load_manifest");

    let mut reports: Vec<RankReport> = Vec::with_capacity(manifest.models.len());
    for model in &manifest.models {
        let candidates = LabeledMatrix::load(
            &manifest.resolve(model),
            MatrixFormat::from_path(&manifest.resolve(model)),
        )
        .and_then(|m| m.align(&manifest.stimulus_ids))
        .map_err(CliError::general)?;
        let sets: Vec<PredictionSet> = manifest
            .subjects
            .iter()
            .map(|s| PredictionSet::load(predictions_dir, &s.id, &model.id))
            .collect::<Result<_, _>>()
            .map_err(CliError::general)?;
        let report = mean_average_rank(
            &sets,
            &candidates,
            manifest.eval.bootstrap_replicates,
            manifest.eval.seed,
        )
        .map_err(CliError::general)?;
        reports.push(report);
    }
    watch.lap("score");

    std::fs::create_dir_all(out).map_err(|e| CliError::general(Error::io(out, e)))?;
    let mut files = Vec::new();

    for report in &reports {
        let name = format!("report_{}.toml", report.model_id);
        let text = report.to_toml_string().map_err(CliError::general)?;
        std::fs::write(out.join(&name), text)
            .map_err(|e| CliError::general(Error::io(out.join(&name), e)))?;
        files.push(name);
    }

    let mut ranks_csv = String::from("model_id,subject_id,stimulus_id,rank\n");
    for report in &reports {
        let body = report.ranks_csv();
        ranks_csv.push_str(body.split_once('\n').map(|(_, b)| b).unwrap_or(""));
    }
    std::fs::write(out.join("ranks.csv"), ranks_csv)
        .map_err(|e| CliError::general(Error::io(out.join("ranks.csv"), e)))?;
    files.push("ranks.csv".to_string());

    // ranking table, best (lowest MAR) first
    let mut order: Vec<usize> = (0..reports.len()).collect();
    order.sort_by(|&a, &b| {
        reports[a]
            .mar
            .total_cmp(&reports[b].mar)
            .then_with(|| reports[a].model_id.cmp(&reports[b].model_id))
    });
    let mut summary = String::from("model_id,mar,ci_low,ci_high,chance_level\n");
    for &i in &order {
        let r = &reports[i];
        let _ = writeln!(
            summary,
            "{},{},{},{},{}",
            r.model_id, r.mar, r.ci_low, r.ci_high, r.chance_level
        );
    }
    std::fs::write(out.join("summary.csv"), summary)
        .map_err(|e| CliError::general(Error::io(out.join("summary.csv"), e)))?;
    files.push("summary.csv".to_string());
    watch.lap("write");

    let record = RunRecord {
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        stage: "eval".to_string(),
        seed: manifest.eval.seed,
        input_digest: Some(input_digest),
        timings_ms: watch.into_timings(),
        outputs: RunRecord::collect_outputs(out, &files).map_err(CliError::general)?,
    };
    record.write(out).map_err(CliError::general)?;

    println!("scored {} models into {}", reports.len(), out.display());
    Ok(())
}
