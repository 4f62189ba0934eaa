//! Experiment manifests: the declarative description of a decoding run.
//!
//! A manifest is a TOML document listing subject response matrices, model
//! representation matrices, the canonical stimulus order, and evaluation
//! settings. Matrix paths are resolved relative to the manifest file's
//! directory. Schema:
//!
//! ```toml
//! stimulus_ids = ["stim0000", "stim0001"]
//!
//! [[subjects]]
//! id = "sub01"
//! path = "matrices/sub01.rdmx"
//!
//! [[models]]
//! id = "glove"
//! path = "matrices/glove.rdmx"
//!
//! [eval]
//! folds = 12
//! inner_folds = 5
//! alpha_grid = [0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0, 10000.0, 100000.0, 1000000.0]
//! standardize = true
//! bootstrap_replicates = 2000
//! seed = 0
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ridge::RidgeConfig;

/// One subject or model entry: an identifier plus the path of its matrix.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MatrixRef {
    pub id: String,
    pub path: PathBuf,
}

/// Evaluation settings shared by the decode, eval, and crossmodel stages.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct EvalSettings {
    /// Outer cross-validation folds for out-of-fold predictions.
    pub folds: usize,
    /// Folds used inside each training split to select alpha.
    pub inner_folds: usize,
    pub alpha_grid: Vec<f64>,
    /// Z-score decoder inputs per column, statistics fit on training rows.
    pub standardize: bool,
    pub bootstrap_replicates: usize,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            folds: 12,
            inner_folds: 5,
            alpha_grid: RidgeConfig::default().alpha_grid,
            standardize: true,
            bootstrap_replicates: 2000,
            seed: 0,
        }
    }
}

impl EvalSettings {
    pub fn ridge_config(&self) -> RidgeConfig {
        RidgeConfig {
            alpha_grid: self.alpha_grid.clone(),
            standardize: self.standardize,
            ..RidgeConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidConfig(format!(
                "eval.folds must be at least 2, found {}",
                self.folds
            )));
        }
        if self.inner_folds < 2 {
            return Err(Error::InvalidConfig(format!(
                "eval.inner_folds must be at least 2, found {}",
                self.inner_folds
            )));
        }
        if self.bootstrap_replicates == 0 {
            return Err(Error::InvalidConfig(
                "eval.bootstrap_replicates must be at least 1".into(),
            ));
        }
        RidgeConfig {
            alpha_grid: self.alpha_grid.clone(),
            ..RidgeConfig::default()
        }
        .validate()
        .map_err(|e| Error::InvalidConfig(format!("eval.alpha_grid: {e}")))
    }
}

/// Declarative description of an experiment: who, what, and how to score.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentManifest {
    pub stimulus_ids: Vec<String>,
    pub subjects: Vec<MatrixRef>,
    pub models: Vec<MatrixRef>,
    #[serde(default)]
    pub eval: EvalSettings,
    /// Directory that relative matrix paths are resolved against; set to
    /// the manifest file's parent on load.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentManifest {
    pub fn load(path: &Path) -> Result<ExperimentManifest> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: ExperimentManifest =
            toml::from_str(&text).map_err(|e| Error::bad_file(path, e.to_string()))?;
        manifest.base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::bad_file(path, format!("serialization failed: {e}")))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Resolve a matrix path against the manifest's directory.
    pub fn resolve(&self, r: &MatrixRef) -> PathBuf {
        if r.path.is_absolute() {
            r.path.clone()
        } else {
            self.base_dir.join(&r.path)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stimulus_ids.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "stimulus_ids: need at least 2 stimuli, found {}",
                self.stimulus_ids.len()
            )));
        }
        let mut seen = HashSet::new();
        for id in &self.stimulus_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "stimulus_ids: duplicate ID '{id}'"
                )));
            }
        }
        if self.subjects.is_empty() {
            return Err(Error::InvalidConfig("subjects: list is empty".into()));
        }
        if self.models.is_empty() {
            return Err(Error::InvalidConfig("models: list is empty".into()));
        }
        check_entity_ids("subjects", &self.subjects)?;
        check_entity_ids("models", &self.models)?;
        self.eval.validate()
    }
}

fn check_entity_ids(field: &str, refs: &[MatrixRef]) -> Result<()> {
    let mut seen = HashSet::new();
    for r in refs {
        if r.id.is_empty() {
            return Err(Error::InvalidConfig(format!("{field}: empty ID")));
        }
        if !r
            .id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        {
            return Err(Error::InvalidConfig(format!(
                "{field}: ID '{}' contains characters outside [A-Za-z0-9_.-]",
                r.id
            )));
        }
        if !seen.insert(r.id.as_str()) {
            return Err(Error::InvalidConfig(format!(
                "{field}: duplicate ID '{}'",
                r.id
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn sample() -> ExperimentManifest {
        ExperimentManifest {
            stimulus_ids: vec!["a".into(), "b".into(), "c".into()],
            subjects: vec![MatrixRef {
                id: "sub01".into(),
                path: "matrices/sub01.rdmx".into(),
            }],
            models: vec![MatrixRef {
                id: "m1".into(),
                path: "matrices/m1.rdmx".into(),
            }],
            eval: EvalSettings::default(),
            base_dir: PathBuf::new(),
        }
    }

    #[test]
    fn round_trips_through_toml() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("manifest.toml");
        let m = sample();
        m.save(&path).unwrap();
        let back = ExperimentManifest::load(&path).unwrap();
        assert_eq!(back.stimulus_ids, m.stimulus_ids);
        assert_eq!(back.subjects, m.subjects);
        assert_eq!(back.models, m.models);
        assert_eq!(back.eval, m.eval);
        assert_eq!(back.base_dir, dir.path());
    }

    #[test]
    fn relative_paths_resolve_against_manifest_dir() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("manifest.toml");
        sample().save(&path).unwrap();
        let m = ExperimentManifest::load(&path).unwrap();
        assert_eq!(
            m.resolve(&m.subjects[0]),
            dir.path().join("matrices/sub01.rdmx")
        );
    }

    #[test]
    fn duplicate_subject_id_rejected() {
        let mut m = sample();
        m.subjects.push(m.subjects[0].clone());
        let err = m.validate().unwrap_err();
        assert!(err.to_string().contains("duplicate ID 'sub01'"));
    }

    #[test]
    fn hostile_id_rejected() {
        let mut m = sample();
        m.models[0].id = "../evil".into();
        assert!(m.validate().is_err());
    }

    #[test]
    fn default_eval_settings_are_valid() {
        EvalSettings::default().validate().unwrap();
        assert_eq!(EvalSettings::default().alpha_grid.len(), 10);
    }

    #[test]
    fn sparse_manifest_fills_defaults() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("manifest.toml");
        fs::write(
            &path,
            r#"
stimulus_ids = ["a", "b"]

[[subjects]]
id = "s"
path = "s.rdmx"

[[models]]
id = "m"
path = "m.rdmx"
"#,
        )
        .unwrap();
        let m = ExperimentManifest::load(&path).unwrap();
        assert_eq!(m.eval, EvalSettings::default());
    }
}
