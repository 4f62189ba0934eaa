//! The subject × model decoding grid: per-pair training and out-of-fold
//! prediction of target representations from response matrices.
//!
//! Every pair is an independent pure computation keyed on
//! `(seed, subject_id, model_id)`, so the grid can run on any number of
//! workers and still produce bit-identical results, and removing one pair
//! from a manifest never changes any other pair's output.

use std::collections::HashSet;
use std::path::Path;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::ExperimentManifest;
use crate::matrix::{LabeledMatrix, MatrixFormat};
use crate::ridge::{self, RidgeConfig};
use crate::rng;

/// Whether predictions come from held-out folds or a single in-sample fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMode {
    CrossValidated,
    InSample,
}

/// Regularization actually used, per outer fold or once globally.
#[derive(Debug, Clone, PartialEq)]
pub enum AlphaUsed {
    PerFold(Vec<f64>),
    Global(f64),
}

/// One decoding task: predict `y` (model representations) from `x`
/// (subject responses), both aligned to the same stimulus order.
#[derive(Debug, Clone)]
pub struct DecoderJob {
    pub subject_id: String,
    pub model_id: String,
    pub x: LabeledMatrix,
    pub y: LabeledMatrix,
    pub cfg: RidgeConfig,
    pub folds: usize,
    /// Folds used by the nested alpha selection inside each training split.
    pub inner_folds: usize,
    pub seed: u64,
    pub mode: PredictionMode,
}

/// Predictions for one subject–model pair, rows in canonical stimulus
/// order. In cross-validated mode each row was predicted by a fold whose
/// training set excluded that row.
#[derive(Debug, Clone)]
pub struct PredictionSet {
    pub subject_id: String,
    pub model_id: String,
    pub y_hat: LabeledMatrix,
    pub alpha_used: AlphaUsed,
    pub mode: PredictionMode,
    /// Outer fold that held out each row (cross-validated mode only).
    pub fold_of: Option<Vec<u32>>,
    pub seed: u64,
    pub folds: usize,
}

/// Deterministic outer-fold assignment, one fold index per row of `ids`.
///
/// The IDs are sorted, shuffled by a stream keyed on
/// `(seed, subject_id, model_id)`, and split into contiguous chunks. The
/// resulting ID→fold map depends only on the ID set and the key, never on
/// the row order of the incoming matrices.
pub fn fold_assignments(
    ids: &[String],
    k: usize,
    seed: u64,
    subject_id: &str,
    model_id: &str,
) -> Vec<u32> {
    use rand::seq::SliceRandom;
    assert!(k >= 2 && k <= ids.len(), "need 2 <= k <= n");
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    let mut stream = rng::stream(seed, &["fold_assignments", subject_id, model_id]);
    order.shuffle(&mut stream);

    let n = ids.len();
    let base = n / k;
    let extra = n % k;
    let mut fold_of = vec![0u32; n];
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        for &row in &order[start..start + size] {
            fold_of[row] = f as u32;
        }
        start += size;
    }
    fold_of
}

/// Train and predict for one pair. See [`PredictionMode`] for the two
/// prediction regimes; alpha is selected by nested cross-validation on
/// each training split (or on all rows for in-sample fits).
pub fn train_and_predict(job: &DecoderJob) -> Result<PredictionSet> {
    job.cfg.validate()?;
    if job.x.stimulus_ids() != job.y.stimulus_ids() {
        return Err(Error::Misaligned(format!(
            "subject '{}' and model '{}' matrices have different stimulus orders",
            job.subject_id, job.model_id
        )));
    }
    let n = job.x.nrows();
    if job.folds < 2 || n < job.folds {
        return Err(Error::InvalidConfig(format!(
            "need 2 <= folds <= rows, found folds = {} with {} rows",
            job.folds, n
        )));
    }

    let x = job.x.values();
    let y = job.y.values();
    let ids = job.x.stimulus_ids();

    match job.mode {
        PredictionMode::InSample => {
            let sel_seed = rng::derive_seed(
                job.seed,
                &["alpha", &job.subject_id, &job.model_id, "global"],
            );
            let sel = ridge::select_alpha(&x, &y, &job.cfg, job.inner_folds, sel_seed)?;
            let fitted = ridge::fit(&x, &y, sel.best_alpha, &job.cfg)?;
            let y_hat = fitted.predict(&x)?;
            Ok(PredictionSet {
                subject_id: job.subject_id.clone(),
                model_id: job.model_id.clone(),
                y_hat: LabeledMatrix::new(ids.to_vec(), y_hat)?,
                alpha_used: AlphaUsed::Global(sel.best_alpha),
                mode: job.mode,
                fold_of: None,
                seed: job.seed,
                folds: job.folds,
            })
        }
        PredictionMode::CrossValidated => {
            let fold_of = fold_assignments(ids, job.folds, job.seed, &job.subject_id, &job.model_id);
            let mut y_hat = Array2::<f64>::zeros((n, y.ncols()));
            let mut alphas = Vec::with_capacity(job.folds);
            for fold in 0..job.folds as u32 {
                let test_idx: Vec<usize> =
                    (0..n).filter(|&i| fold_of[i] == fold).collect();
                let train_idx: Vec<usize> =
                    (0..n).filter(|&i| fold_of[i] != fold).collect();
                let x_train = x.select(Axis(0), &train_idx);
                let y_train = y.select(Axis(0), &train_idx);
                let x_test = x.select(Axis(0), &test_idx);

                let sel_seed = rng::derive_seed(
                    job.seed,
                    &["alpha", &job.subject_id, &job.model_id, &fold.to_string()],
                );
                let sel = ridge::select_alpha(
                    &x_train.view(),
                    &y_train.view(),
                    &job.cfg,
                    job.inner_folds,
                    sel_seed,
                )?;
                let fitted = ridge::fit(&x_train.view(), &y_train.view(), sel.best_alpha, &job.cfg)?;
                let pred = fitted.predict(&x_test.view())?;
                for (local, &row) in test_idx.iter().enumerate() {
                    y_hat.row_mut(row).assign(&pred.row(local));
                }
                alphas.push(sel.best_alpha);
            }
            Ok(PredictionSet {
                subject_id: job.subject_id.clone(),
                model_id: job.model_id.clone(),
                y_hat: LabeledMatrix::new(ids.to_vec(), y_hat)?,
                alpha_used: AlphaUsed::PerFold(alphas),
                mode: job.mode,
                fold_of: Some(fold_of),
                seed: job.seed,
                folds: job.folds,
            })
        }
    }
}

/// Run every (subject, model) pair in the manifest. Results come back in
/// manifest order (subject-major); any failing pair aborts the whole grid
/// with the pair identified.
pub fn run_grid(
    manifest: &ExperimentManifest,
    mode: PredictionMode,
) -> Result<Vec<PredictionSet>> {
    manifest.validate()?;

    let load_aligned = |kind: &'static str, id: &str, path: &Path| -> Result<LabeledMatrix> {
        let wrap = |source: Error| Error::EntityMatrix {
            kind,
            id: id.to_string(),
            path: path.to_path_buf(),
            source: Box::new(source),
        };
        let m = LabeledMatrix::load(path, MatrixFormat::from_path(path)).map_err(wrap)?;
        m.align(&manifest.stimulus_ids).map_err(wrap)
    };

    let subjects: Vec<(String, LabeledMatrix)> = manifest
        .subjects
        .iter()
        .map(|r| Ok((r.id.clone(), load_aligned("subject", &r.id, &manifest.resolve(r))?)))
        .collect::<Result<_>>()?;
    let models: Vec<(String, LabeledMatrix)> = manifest
        .models
        .iter()
        .map(|r| Ok((r.id.clone(), load_aligned("model", &r.id, &manifest.resolve(r))?)))
        .collect::<Result<_>>()?;

    let eval = &manifest.eval;
    let cfg = eval.ridge_config();
    let pairs: Vec<(&(String, LabeledMatrix), &(String, LabeledMatrix))> = subjects
        .iter()
        .flat_map(|s| models.iter().map(move |m| (s, m)))
        .collect();

    pairs
        .par_iter()
        .map(|((sid, x), (mid, y))| {
            let job = DecoderJob {
                subject_id: sid.clone(),
                model_id: mid.clone(),
                x: x.clone(),
                y: y.clone(),
                cfg: cfg.clone(),
                folds: eval.folds,
                inner_folds: eval.inner_folds,
                seed: eval.seed,
                mode,
            };
            train_and_predict(&job).map_err(|e| Error::JobFailed {
                subject_id: sid.clone(),
                model_id: mid.clone(),
                source: Box::new(e),
            })
        })
        .collect()
}

// --- persistence ---

#[derive(Serialize, Deserialize)]
struct PredictionSidecar {
    subject_id: String,
    model_id: String,
    mode: PredictionMode,
    seed: u64,
    folds: usize,
    toolkit_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha_global: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha_per_fold: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fold_of: Option<Vec<u32>>,
}

/// File stem shared by a pair's prediction matrix and sidecar.
pub fn prediction_stem(subject_id: &str, model_id: &str) -> String {
    format!("pred_{subject_id}__{model_id}")
}

impl PredictionSet {
    /// Write `<dir>/pred_<subject>__<model>.rdmx` plus a `.toml` sidecar
    /// carrying the run metadata.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let stem = prediction_stem(&self.subject_id, &self.model_id);
        let matrix_path = dir.join(format!("{stem}.rdmx"));
        self.y_hat.save(&matrix_path, MatrixFormat::Binary)?;

        let (alpha_global, alpha_per_fold) = match &self.alpha_used {
            AlphaUsed::Global(a) => (Some(*a), None),
            AlphaUsed::PerFold(v) => (None, Some(v.clone())),
        };
        let sidecar = PredictionSidecar {
            subject_id: self.subject_id.clone(),
            model_id: self.model_id.clone(),
            mode: self.mode,
            seed: self.seed,
            folds: self.folds,
            toolkit_version: crate::VERSION.to_string(),
            alpha_global,
            alpha_per_fold,
            fold_of: self.fold_of.clone(),
        };
        let sidecar_path = dir.join(format!("{stem}.toml"));
        let text = toml::to_string_pretty(&sidecar)
            .map_err(|e| Error::bad_file(&sidecar_path, format!("serialization failed: {e}")))?;
        std::fs::write(&sidecar_path, text).map_err(|e| Error::io(&sidecar_path, e))
    }

    pub fn load(dir: &Path, subject_id: &str, model_id: &str) -> Result<PredictionSet> {
        let stem = prediction_stem(subject_id, model_id);
        let sidecar_path = dir.join(format!("{stem}.toml"));
        let text =
            std::fs::read_to_string(&sidecar_path).map_err(|e| Error::io(&sidecar_path, e))?;
        let sidecar: PredictionSidecar =
            toml::from_str(&text).map_err(|e| Error::bad_file(&sidecar_path, e.to_string()))?;
        let y_hat = LabeledMatrix::load(
            &dir.join(format!("{stem}.rdmx")),
            MatrixFormat::Binary,
        )?;

        let alpha_used = match (sidecar.alpha_global, sidecar.alpha_per_fold) {
            (Some(a), None) => AlphaUsed::Global(a),
            (None, Some(v)) => AlphaUsed::PerFold(v),
            _ => {
                return Err(Error::bad_file(
                    &sidecar_path,
                    "expected exactly one of alpha_global / alpha_per_fold",
                ))
            }
        };
        if let Some(fold_of) = &sidecar.fold_of {
            if fold_of.len() != y_hat.nrows() {
                return Err(Error::bad_file(
                    &sidecar_path,
                    format!(
                        "fold_of has {} entries for {} rows",
                        fold_of.len(),
                        y_hat.nrows()
                    ),
                ));
            }
        }
        Ok(PredictionSet {
            subject_id: sidecar.subject_id,
            model_id: sidecar.model_id,
            y_hat,
            alpha_used,
            mode: sidecar.mode,
            fold_of: sidecar.fold_of,
            seed: sidecar.seed,
            folds: sidecar.folds,
        })
    }

    /// Canonical byte encoding (sidecar text + matrix payload), used by the
    /// determinism tests.
    pub fn digest_bytes(&self) -> Vec<u8> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(self.subject_id.as_bytes());
        bytes.push(0);
        bytes.extend_from_slice(self.model_id.as_bytes());
        bytes.push(0);
        match &self.alpha_used {
            AlphaUsed::Global(a) => bytes.extend_from_slice(&a.to_le_bytes()),
            AlphaUsed::PerFold(v) => {
                for a in v {
                    bytes.extend_from_slice(&a.to_le_bytes());
                }
            }
        }
        if let Some(fold_of) = &self.fold_of {
            for f in fold_of {
                bytes.extend_from_slice(&f.to_le_bytes());
            }
        }
        for v in self.y_hat.values().iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes
    }
}

/// Verify the missing/present pairs of a prediction directory against a
/// manifest; returns the missing (subject, model) pairs.
pub fn missing_pairs(manifest: &ExperimentManifest, dir: &Path) -> Vec<(String, String)> {
    let mut missing = Vec::new();
    let present: HashSet<String> = std::fs::read_dir(dir)
        .map(|entries| {
            entries
                .filter_map(|e| e.ok())
                .filter_map(|e| e.file_name().to_str().map(|s| s.to_string()))
                .collect()
        })
        .unwrap_or_default();
    for s in &manifest.subjects {
        for m in &manifest.models {
            let stem = prediction_stem(&s.id, &m.id);
            if !present.contains(&format!("{stem}.rdmx")) || !present.contains(&format!("{stem}.toml"))
            {
                missing.push((s.id.clone(), m.id.clone()));
            }
        }
    }
    missing
}

#[cfg(test)]
mod tests {
    use super::*;
    use braindec_testkit as testkit;
    use ndarray::Array2;

    fn labeled(prefix: &str, values: Array2<f64>) -> LabeledMatrix {
        let ids = (0..values.nrows()).map(|i| format!("{prefix}{i:03}")).collect();
        LabeledMatrix::new(ids, values).unwrap()
    }

    fn small_cfg(alphas: Vec<f64>) -> RidgeConfig {
        RidgeConfig {
            alpha_grid: alphas,
            standardize: false,
            ..RidgeConfig::default()
        }
    }

    #[test]
    fn noiseless_linear_world_predicts_held_out_rows() {
        let mut rng = crate::rng::stream(1, &["decoder", "noiseless"]);
        let x = testkit::random_matrix(&mut rng, 64, 8);
        let w = testkit::random_matrix(&mut rng, 8, 4);
        let y = x.dot(&w);
        let job = DecoderJob {
            subject_id: "s".into(),
            model_id: "m".into(),
            x: labeled("stim", x.clone()),
            y: labeled("stim", y.clone()),
            cfg: small_cfg(vec![1e-7, 1e-4, 1e-1]),
            folds: 4,
            inner_folds: 4,
            seed: 5,
            mode: PredictionMode::CrossValidated,
        };
        let pred = train_and_predict(&job).unwrap();
        let mut worst = 0.0f64;
        for (p, t) in pred.y_hat.values().rows().into_iter().zip(y.rows()) {
            let num: f64 = p
                .iter()
                .zip(t.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let den: f64 = t.iter().map(|v| v * v).sum::<f64>().sqrt();
            worst = worst.max(num / den);
        }
        assert!(worst < 1e-3, "worst row-wise relative error {worst}");
    }

    #[test]
    fn independent_targets_hit_the_noise_floor() {
        let mut rng = crate::rng::stream(2, &["decoder", "noise"]);
        let x = testkit::random_matrix(&mut rng, 48, 6);
        let y = testkit::random_matrix(&mut rng, 48, 3);
        let job = DecoderJob {
            subject_id: "s".into(),
            model_id: "m".into(),
            x: labeled("stim", x),
            y: labeled("stim", y.clone()),
            cfg: small_cfg(vec![1e-3, 1e0, 1e3, 1e6]),
            folds: 4,
            inner_folds: 4,
            seed: 11,
            mode: PredictionMode::CrossValidated,
        };
        let pred = train_and_predict(&job).unwrap();
        let mse: f64 = pred
            .y_hat
            .values()
            .iter()
            .zip(y.iter())
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / y.len() as f64;
        let col_means = y.mean_axis(Axis(0)).unwrap();
        let var: f64 = y
            .rows()
            .into_iter()
            .flat_map(|r| {
                r.iter()
                    .zip(col_means.iter())
                    .map(|(v, m)| (v - m) * (v - m))
                    .collect::<Vec<_>>()
            })
            .sum::<f64>()
            / y.len() as f64;
        assert!(
            mse >= 0.9 * var,
            "out-of-fold mse {mse} beat the noise floor {var}"
        );
    }

    #[test]
    fn in_sample_interpolates_square_design() {
        let mut rng = crate::rng::stream(3, &["decoder", "interp"]);
        let x = testkit::random_matrix(&mut rng, 8, 8) + Array2::<f64>::eye(8) * 5.0;
        let y = testkit::random_matrix(&mut rng, 8, 2);
        let job = DecoderJob {
            subject_id: "s".into(),
            model_id: "m".into(),
            x: labeled("stim", x),
            y: labeled("stim", y.clone()),
            cfg: small_cfg(vec![1e-12]),
            folds: 4,
            inner_folds: 4,
            seed: 0,
            mode: PredictionMode::InSample,
        };
        let pred = train_and_predict(&job).unwrap();
        for (p, t) in pred.y_hat.values().iter().zip(y.iter()) {
            assert!((p - t).abs() < 1e-6);
        }
        assert!(matches!(pred.alpha_used, AlphaUsed::Global(a) if a == 1e-12));
    }

    #[test]
    fn out_of_fold_purity_recomputed_from_logged_assignments() {
        let mut rng = crate::rng::stream(4, &["decoder", "purity"]);
        let x = testkit::random_matrix(&mut rng, 30, 5);
        let w = testkit::random_matrix(&mut rng, 5, 3);
        let y = x.dot(&w) + testkit::random_matrix(&mut rng, 30, 3) * 0.1;
        let job = DecoderJob {
            subject_id: "subA".into(),
            model_id: "modB".into(),
            x: labeled("stim", x.clone()),
            y: labeled("stim", y.clone()),
            cfg: small_cfg(vec![1e-3, 1e0]),
            folds: 3,
            inner_folds: 3,
            seed: 77,
            mode: PredictionMode::CrossValidated,
        };
        let pred = train_and_predict(&job).unwrap();
        let fold_of = pred.fold_of.as_ref().unwrap();
        let alphas = match &pred.alpha_used {
            AlphaUsed::PerFold(v) => v.clone(),
            _ => panic!("expected per-fold alphas"),
        };

        // Refit fold 1 from the logged assignment and logged alpha; its
        // held-out predictions must reproduce the stored rows exactly.
        let fold = 1u32;
        let train_idx: Vec<usize> = (0..30).filter(|&i| fold_of[i] != fold).collect();
        let test_idx: Vec<usize> = (0..30).filter(|&i| fold_of[i] == fold).collect();
        let xt = x.select(Axis(0), &train_idx);
        let yt = y.select(Axis(0), &train_idx);
        let fitted =
            ridge::fit(&xt.view(), &yt.view(), alphas[fold as usize], &job.cfg).unwrap();
        let again = fitted
            .predict(&x.select(Axis(0), &test_idx).view())
            .unwrap();
        for (local, &row) in test_idx.iter().enumerate() {
            for c in 0..3 {
                assert_eq!(
                    again[[local, c]].to_bits(),
                    pred.y_hat.values()[[row, c]].to_bits()
                );
            }
        }
    }

    #[test]
    fn fold_assignment_ignores_row_order() {
        let ids: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
        let folds_a = fold_assignments(&ids, 3, 9, "sub", "mod");
        let mut reversed = ids.clone();
        reversed.reverse();
        let folds_b = fold_assignments(&reversed, 3, 9, "sub", "mod");
        for (i, id) in ids.iter().enumerate() {
            let j = reversed.iter().position(|r| r == id).unwrap();
            assert_eq!(folds_a[i], folds_b[j], "fold moved for {id}");
        }
    }

    #[test]
    fn fold_assignment_keyed_per_pair() {
        let ids: Vec<String> = (0..12).map(|i| format!("s{i}")).collect();
        assert_eq!(
            fold_assignments(&ids, 3, 9, "subA", "modX"),
            fold_assignments(&ids, 3, 9, "subA", "modX")
        );
        assert_ne!(
            fold_assignments(&ids, 3, 9, "subA", "modX"),
            fold_assignments(&ids, 3, 9, "subA", "modY")
        );
    }

    #[test]
    fn misaligned_job_rejected() {
        let mut rng = crate::rng::stream(6, &["decoder", "misaligned"]);
        let x = labeled("a", testkit::random_matrix(&mut rng, 6, 2));
        let y = labeled("b", testkit::random_matrix(&mut rng, 6, 2));
        let job = DecoderJob {
            subject_id: "s".into(),
            model_id: "m".into(),
            x,
            y,
            cfg: small_cfg(vec![1.0]),
            folds: 2,
            inner_folds: 2,
            seed: 0,
            mode: PredictionMode::CrossValidated,
        };
        assert!(matches!(train_and_predict(&job), Err(Error::Misaligned(_))));
    }

    #[test]
    fn prediction_set_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = crate::rng::stream(8, &["decoder", "io"]);
        let x = testkit::random_matrix(&mut rng, 12, 4);
        let y = testkit::random_matrix(&mut rng, 12, 2);
        let job = DecoderJob {
            subject_id: "sub01".into(),
            model_id: "m1".into(),
            x: labeled("stim", x),
            y: labeled("stim", y),
            cfg: small_cfg(vec![1e-2, 1e2]),
            folds: 3,
            inner_folds: 3,
            seed: 21,
            mode: PredictionMode::CrossValidated,
        };
        let pred = train_and_predict(&job).unwrap();
        pred.save(dir.path()).unwrap();
        let back = PredictionSet::load(dir.path(), "sub01", "m1").unwrap();
        assert_eq!(back.digest_bytes(), pred.digest_bytes());
        assert_eq!(back.mode, pred.mode);
        assert_eq!(back.folds, pred.folds);
    }
}
