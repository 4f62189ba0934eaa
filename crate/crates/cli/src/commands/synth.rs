//! `braindec synth`: world spec in, matrices + manifest out. Exit code 2
//! on any spec problem, with the offending field named.

use std::path::Path;

use braindec_core::synth::{self, WorldSpec};

use crate::record::{sha256_hex_file, RunRecord, Stopwatch};
use crate::{CliError, GlobalOpts};

pub fn run(spec_path: &Path, out: &Path, opts: GlobalOpts) -> Result<(), CliError> {
    let mut watch = Stopwatch::new(!opts.reproducible);

    let mut spec =
        WorldSpec::load(spec_path).map_err(|error| CliError { code: 2, error })?;
    if let Some(seed) = opts.seed {
        spec.seed = seed;
        if let Some(eval) = &mut spec.eval {
            eval.seed = seed;
        }
    }
    let input_digest = sha256_hex_file(spec_path).map_err(CliError::general)?;
    watch.lap("load_spec");

    let world = synth::generate(&spec).map_err(|error| CliError { code: 2, error })?;
    watch.lap("generate");

    std::fs::create_dir_all(out)
        .map_err(|e| CliError::general(braindec_core::Error::io(out, e)))?;
    synth::write_world(&world, &spec.eval_settings(), out).map_err(CliError::general)?;
    watch.lap("write");

    let mut files: Vec<String> = world
        .subjects
        .iter()
        .chain(world.models.iter())
        .map(|(id, _)| format!("matrices/{id}.rdmx"))
        .collect();
    files.push("manifest.toml".to_string());

    let record = RunRecord {
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        stage: "synth".to_string(),
        seed: spec.seed,
        input_digest: Some(input_digest),
        timings_ms: watch.into_timings(),
        outputs: RunRecord::collect_outputs(out, &files).map_err(CliError::general)?,
    };
    record.write(out).map_err(CliError::general)?;

    println!(
        "wrote {} subject and {} model matrices to {}",
        world.subjects.len(),
        world.models.len(),
        out.display()
    );
    Ok(())
}
