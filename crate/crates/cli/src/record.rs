//! Run records: the commit marker written at the end of every stage.
//!
//! A record lists the stage's inputs (by digest), the effective seed, per
//! phase timings, and every output file with its SHA-256. It is written
//! last, so the presence of `run_record.toml` means the stage completed.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use braindec_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OutputEntry {
    /// Path relative to the stage's output root.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunRecord {
    pub toolkit_version: String,
    pub stage: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_digest: Option<String>,
    /// Wall-clock milliseconds per phase; empty under `--reproducible`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub timings_ms: BTreeMap<String, u64>,
    pub outputs: Vec<OutputEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_hex_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Accumulates phase timings; dropped entirely in reproducible mode.
pub struct Stopwatch {
    enabled: bool,
    mark: Instant,
    timings: BTreeMap<String, u64>,
}

impl Stopwatch {
    pub fn new(enabled: bool) -> Stopwatch {
        Stopwatch {
            enabled,
            mark: Instant::now(),
            timings: BTreeMap::new(),
        }
    }

    /// Record the time since the previous lap under `phase`.
    pub fn lap(&mut self, phase: &str) {
        let elapsed = self.mark.elapsed().as_millis() as u64;
        self.mark = Instant::now();
        if self.enabled {
            self.timings.insert(phase.to_string(), elapsed);
        }
    }

    pub fn into_timings(self) -> BTreeMap<String, u64> {
        self.timings
    }
}

impl RunRecord {
    /// Digest `files` (relative to `out_dir`) into output entries.
    pub fn collect_outputs(out_dir: &Path, files: &[String]) -> Result<Vec<OutputEntry>> {
        files
            .iter()
            .map(|f| {
                Ok(OutputEntry {
                    path: f.clone(),
                    sha256: sha256_hex_file(&out_dir.join(f))?,
                })
            })
            .collect()
    }

    /// Write `run_record.toml` into `out_dir`. Call only after every output
    /// file is in place.
    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let path = out_dir.join("run_record.toml");
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::InvalidConfig(format!("run record serialization failed: {e}")))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(out_dir: &Path) -> Result<RunRecord> {
        let path = out_dir.join("run_record.toml");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        toml::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("run record parse failed: {e}")))
    }

    /// Check that every listed output exists with the recorded digest.
    pub fn verify(&self, out_dir: &Path) -> Result<()> {
        for entry in &self.outputs {
            let actual = sha256_hex_file(&out_dir.join(&entry.path))?;
            if actual != entry.sha256 {
                return Err(Error::InvalidConfig(format!(
                    "output '{}' digest mismatch: recorded {}, found {actual}",
                    entry.path, entry.sha256
                )));
            }
        }
        Ok(())
    }
}
