//! Synthetic worlds with a controlled shared latent space.
//!
//! A world draws a latent matrix `Z` (stimuli × latent dims) and derives
//! every subject and model from it:
//!
//! * subject `j`: `X_j = Z·A_j + ε`, readout `A_j` with `N(0, 1/latent_dim)`
//!   entries (unit signal variance per voxel), `ε` with SD `brain_noise_sd`;
//! * model `k`: `Y_k = √f·Z·B_k + √(1−f)·U_k·C_k + η`, where `f` is the
//!   model's shared fraction, `U_k` is a model-private latent of the same
//!   dimensionality, `B_k`/`C_k` have `N(0, 1/latent_dim)` entries, and `η`
//!   has SD `rep_noise_sd`; columns of `Y_k` are then scaled to unit
//!   variance so the shared fraction is the only driver of decodability.
//!
//! Every draw comes from a stream keyed on `(seed, entity)`, so adding a
//! model or subject to a spec leaves all other entities' data bit-identical.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{EvalSettings, ExperimentManifest, MatrixRef};
use crate::matrix::{LabeledMatrix, MatrixFormat};
use crate::rng;

/// One synthetic model: output dimensionality and the fraction of its
/// signal variance driven by the shared latent space.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelSpec {
    pub id: String,
    pub rep_dim: usize,
    pub shared_fraction: f64,
}

/// Declarative description of a synthetic world.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WorldSpec {
    pub n_stimuli: usize,
    pub latent_dim: usize,
    pub n_subjects: usize,
    pub voxels_per_subject: usize,
    pub brain_noise_sd: f64,
    pub rep_noise_sd: f64,
    pub seed: u64,
    pub models: Vec<ModelSpec>,
    /// Optional evaluation settings copied into the emitted manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalSettings>,
}

impl WorldSpec {
    pub fn load(path: &Path) -> Result<WorldSpec> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: WorldSpec =
            toml::from_str(&text).map_err(|e| Error::bad_file(path, e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_stimuli < 2 {
            return Err(Error::InvalidConfig(format!(
                "n_stimuli must be at least 2, found {}",
                self.n_stimuli
            )));
        }
        for (name, v) in [
            ("latent_dim", self.latent_dim),
            ("n_subjects", self.n_subjects),
            ("voxels_per_subject", self.voxels_per_subject),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        for (name, v) in [
            ("brain_noise_sd", self.brain_noise_sd),
            ("rep_noise_sd", self.rep_noise_sd),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and >= 0, found {v}"
                )));
            }
        }
        if self.models.is_empty() {
            return Err(Error::InvalidConfig("models: list is empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for (i, m) in self.models.iter().enumerate() {
            if m.id.is_empty()
                || !m
                    .id
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
            {
                return Err(Error::InvalidConfig(format!(
                    "models[{i}].id '{}' must be non-empty [A-Za-z0-9_.-]",
                    m.id
                )));
            }
            if !seen.insert(m.id.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "models[{i}].id '{}' is a duplicate",
                    m.id
                )));
            }
            if m.rep_dim == 0 {
                return Err(Error::InvalidConfig(format!(
                    "models[{i}].rep_dim must be at least 1"
                )));
            }
            if !(m.shared_fraction.is_finite()
                && (0.0..=1.0).contains(&m.shared_fraction))
            {
                return Err(Error::InvalidConfig(format!(
                    "models[{i}].shared_fraction must lie in [0, 1], found {}",
                    m.shared_fraction
                )));
            }
        }
        if let Some(eval) = &self.eval {
            eval.validate()?;
        }
        Ok(())
    }

    /// Evaluation settings for the emitted manifest: the spec's own, or
    /// defaults seeded with the world seed.
    pub fn eval_settings(&self) -> EvalSettings {
        self.eval.clone().unwrap_or(EvalSettings {
            seed: self.seed,
            ..EvalSettings::default()
        })
    }
}

/// Everything needed to reconstruct how a model was wired to the latent.
#[derive(Debug, Clone)]
pub struct ModelTruth {
    pub model_id: String,
    pub shared_loading: Array2<f64>,
    pub private_latent: Array2<f64>,
    pub private_loading: Array2<f64>,
}

/// Ground truth of a generated world; a pure function of the spec.
#[derive(Debug, Clone)]
pub struct WorldTruth {
    pub latent: Array2<f64>,
    pub subject_readouts: Vec<(String, Array2<f64>)>,
    pub models: Vec<ModelTruth>,
}

/// A generated world: labeled matrices ready for the pipeline plus truth.
#[derive(Debug, Clone)]
pub struct World {
    pub stimulus_ids: Vec<String>,
    pub subjects: Vec<(String, LabeledMatrix)>,
    pub models: Vec<(String, LabeledMatrix)>,
    pub truth: WorldTruth,
}

impl World {
    pub fn model(&self, id: &str) -> Option<&LabeledMatrix> {
        self.models.iter().find(|(m, _)| m == id).map(|(_, v)| v)
    }
}

/// Qualitative decodability prediction for one model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    /// No shared variance: MAR indistinguishable from chance.
    ApproxChance,
    /// Some shared variance: MAR reliably below chance.
    BelowChance,
    /// Fully shared, noise-free, and well-determined: MAR near 0.
    ApproxZero,
}

fn normal_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, sd: f64) -> Array2<f64> {
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * sd)
        .collect();
    Array2::from_shape_vec((rows, cols), data).expect("shape matches buffer")
}

fn pad_width(n: usize) -> usize {
    n.max(1).to_string().len()
}

/// Generate the world described by `spec`; bit-exactly reproducible.
pub fn generate(spec: &WorldSpec) -> Result<World> {
    spec.validate()?;
    let n = spec.n_stimuli;
    let seed = spec.seed;
    let stim_width = pad_width(n - 1);
    let stimulus_ids: Vec<String> = (0..n)
        .map(|i| format!("stim{i:0width$}", width = stim_width))
        .collect();

    let latent = normal_matrix(&mut rng::stream(seed, &["latent"]), n, spec.latent_dim, 1.0);
    let loading_sd = 1.0 / (spec.latent_dim as f64).sqrt();

    let sub_width = pad_width(spec.n_subjects);
    let mut subjects = Vec::with_capacity(spec.n_subjects);
    let mut subject_readouts = Vec::with_capacity(spec.n_subjects);
    for s in 0..spec.n_subjects {
        let id = format!("sub{:0width$}", s + 1, width = sub_width);
        let readout = normal_matrix(
            &mut rng::stream(seed, &["subject", &id, "loading"]),
            spec.latent_dim,
            spec.voxels_per_subject,
            loading_sd,
        );
        let mut x = latent.dot(&readout);
        if spec.brain_noise_sd > 0.0 {
            x += &normal_matrix(
                &mut rng::stream(seed, &["subject", &id, "noise"]),
                n,
                spec.voxels_per_subject,
                spec.brain_noise_sd,
            );
        }
        subjects.push((id.clone(), LabeledMatrix::new(stimulus_ids.clone(), x)?));
        subject_readouts.push((id, readout));
    }

    let mut models = Vec::with_capacity(spec.models.len());
    let mut model_truths = Vec::with_capacity(spec.models.len());
    for m in &spec.models {
        let shared_loading = normal_matrix(
            &mut rng::stream(seed, &["model", &m.id, "shared_loading"]),
            spec.latent_dim,
            m.rep_dim,
            loading_sd,
        );
        let private_latent = normal_matrix(
            &mut rng::stream(seed, &["model", &m.id, "private_latent"]),
            n,
            spec.latent_dim,
            1.0,
        );
        let private_loading = normal_matrix(
            &mut rng::stream(seed, &["model", &m.id, "private_loading"]),
            spec.latent_dim,
            m.rep_dim,
            loading_sd,
        );

        let f = m.shared_fraction;
        let mut y = latent.dot(&shared_loading) * f.sqrt();
        y += &(private_latent.dot(&private_loading) * (1.0 - f).sqrt());
        if spec.rep_noise_sd > 0.0 {
            y += &normal_matrix(
                &mut rng::stream(seed, &["model", &m.id, "noise"]),
                n,
                m.rep_dim,
                spec.rep_noise_sd,
            );
        }
        // unit-variance columns: shared_fraction stays the only driver of
        // decodability differences across models
        for mut col in y.columns_mut() {
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            if sd > 0.0 {
                col.mapv_inplace(|v| v / sd);
            }
        }

        models.push((m.id.clone(), LabeledMatrix::new(stimulus_ids.clone(), y)?));
        model_truths.push(ModelTruth {
            model_id: m.id.clone(),
            shared_loading,
            private_latent,
            private_loading,
        });
    }

    Ok(World {
        stimulus_ids,
        subjects,
        models,
        truth: WorldTruth {
            latent,
            subject_readouts,
            models: model_truths,
        },
    })
}

/// Qualitative decodability prediction per model, by the documented rules:
/// `shared_fraction = 0` → chance; `shared_fraction = 1` with zero noise
/// and `n_stimuli ≥ 4·max(latent_dim, rep_dim, voxels_per_subject)` → near
/// zero; anything else → below chance.
pub fn expected_outcome(spec: &WorldSpec) -> Result<Vec<(String, Expectation)>> {
    spec.validate()?;
    Ok(spec
        .models
        .iter()
        .map(|m| {
            let expectation = if m.shared_fraction == 0.0 {
                Expectation::ApproxChance
            } else if m.shared_fraction == 1.0
                && spec.brain_noise_sd == 0.0
                && spec.rep_noise_sd == 0.0
                && spec.n_stimuli
                    >= 4 * spec
                        .latent_dim
                        .max(m.rep_dim)
                        .max(spec.voxels_per_subject)
            {
                Expectation::ApproxZero
            } else {
                Expectation::BelowChance
            };
            (m.id.clone(), expectation)
        })
        .collect())
}

/// Write a generated world to `dir`: one binary matrix per entity under
/// `dir/matrices/` and a ready-to-run `manifest.toml`. Returns the
/// manifest path.
pub fn write_world(world: &World, eval: &EvalSettings, dir: &Path) -> Result<PathBuf> {
    let matrices = dir.join("matrices");
    fs::create_dir_all(&matrices).map_err(|e| Error::io(&matrices, e))?;

    let mut subjects = Vec::new();
    for (id, m) in &world.subjects {
        let rel = PathBuf::from("matrices").join(format!("{id}.rdmx"));
        m.save(&dir.join(&rel), MatrixFormat::Binary)?;
        subjects.push(MatrixRef {
            id: id.clone(),
            path: rel,
        });
    }
    let mut models = Vec::new();
    for (id, m) in &world.models {
        let rel = PathBuf::from("matrices").join(format!("{id}.rdmx"));
        m.save(&dir.join(&rel), MatrixFormat::Binary)?;
        models.push(MatrixRef {
            id: id.clone(),
            path: rel,
        });
    }

    let manifest = ExperimentManifest {
        stimulus_ids: world.stimulus_ids.clone(),
        subjects,
        models,
        eval: eval.clone(),
        base_dir: dir.to_path_buf(),
    };
    let path = dir.join("manifest.toml");
    manifest.save(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use braindec_testkit as testkit;

    fn spec(models: Vec<ModelSpec>) -> WorldSpec {
        WorldSpec {
            n_stimuli: 384,
            latent_dim: 8,
            n_subjects: 1,
            voxels_per_subject: 40,
            brain_noise_sd: 1.0,
            rep_noise_sd: 0.1,
            seed: 31,
            models,
            eval: None,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let s = spec(vec![ModelSpec {
            id: "m".into(),
            rep_dim: 16,
            shared_fraction: 0.5,
        }]);
        let a = generate(&s).unwrap();
        let b = generate(&s).unwrap();
        for ((_, ma), (_, mb)) in a.subjects.iter().zip(b.subjects.iter()) {
            for (x, y) in ma.values().iter().zip(mb.values().iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        for ((_, ma), (_, mb)) in a.models.iter().zip(b.models.iter()) {
            for (x, y) in ma.values().iter().zip(mb.values().iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn adding_a_model_leaves_others_untouched() {
        let base = spec(vec![ModelSpec {
            id: "keep".into(),
            rep_dim: 12,
            shared_fraction: 0.7,
        }]);
        let mut extended = base.clone();
        extended.models.push(ModelSpec {
            id: "extra".into(),
            rep_dim: 6,
            shared_fraction: 0.2,
        });
        let a = generate(&base).unwrap();
        let b = generate(&extended).unwrap();
        let ka = a.model("keep").unwrap();
        let kb = b.model("keep").unwrap();
        for (x, y) in ka.values().iter().zip(kb.values().iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        for ((_, sa), (_, sb)) in a.subjects.iter().zip(b.subjects.iter()) {
            for (x, y) in sa.values().iter().zip(sb.values().iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn zero_shared_fraction_decorrelates_brain_and_model() {
        let s = spec(vec![ModelSpec {
            id: "indep".into(),
            rep_dim: 16,
            shared_fraction: 0.0,
        }]);
        let world = generate(&s).unwrap();
        let x = &world.subjects[0].1;
        let y = world.model("indep").unwrap();
        let mut max_abs_r = 0.0f64;
        for xc in x.values().columns() {
            for yc in y.values().columns() {
                max_abs_r = max_abs_r.max(testkit::pearson(&xc, &yc).abs());
            }
        }
        assert!(max_abs_r < 0.2, "max |r| = {max_abs_r}");
    }

    #[test]
    fn fully_shared_noise_free_model_is_linear_in_latent() {
        let mut s = spec(vec![ModelSpec {
            id: "full".into(),
            rep_dim: 8, // equal to latent_dim: B is square, invertible a.s.
            shared_fraction: 1.0,
        }]);
        s.brain_noise_sd = 0.0;
        s.rep_noise_sd = 0.0;
        let world = generate(&s).unwrap();
        let y = world.model("full").unwrap();
        let resid = testkit::least_squares_relative_residual(
            &world.truth.latent.view(),
            &y.values(),
        );
        assert!(resid < 1e-8, "relative residual {resid}");
    }

    #[test]
    fn representation_columns_have_unit_variance() {
        let s = spec(vec![ModelSpec {
            id: "m".into(),
            rep_dim: 10,
            shared_fraction: 0.4,
        }]);
        let world = generate(&s).unwrap();
        let y = world.model("m").unwrap();
        let n = y.nrows() as f64;
        for col in y.values().columns() {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            assert!((var - 1.0).abs() < 1e-9, "column variance {var}");
        }
    }

    #[test]
    fn expectation_rules() {
        let mut s = spec(vec![
            ModelSpec {
                id: "zero".into(),
                rep_dim: 16,
                shared_fraction: 0.0,
            },
            ModelSpec {
                id: "half".into(),
                rep_dim: 16,
                shared_fraction: 0.5,
            },
            ModelSpec {
                id: "full".into(),
                rep_dim: 16,
                shared_fraction: 1.0,
            },
        ]);
        let got = expected_outcome(&s).unwrap();
        assert_eq!(got[0].1, Expectation::ApproxChance);
        assert_eq!(got[1].1, Expectation::BelowChance);
        // noisy world: even full sharing is only below chance
        assert_eq!(got[2].1, Expectation::BelowChance);

        s.brain_noise_sd = 0.0;
        s.rep_noise_sd = 0.0;
        s.voxels_per_subject = 64;
        let got = expected_outcome(&s).unwrap();
        assert_eq!(got[2].1, Expectation::ApproxZero);
    }

    #[test]
    fn invalid_shared_fraction_names_the_field() {
        let s = spec(vec![ModelSpec {
            id: "bad".into(),
            rep_dim: 4,
            shared_fraction: 1.5,
        }]);
        let err = s.validate().unwrap_err();
        assert!(
            err.to_string().contains("models[0].shared_fraction"),
            "error was: {err}"
        );
    }

    #[test]
    fn world_round_trips_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let s = WorldSpec {
            n_stimuli: 12,
            latent_dim: 3,
            n_subjects: 2,
            voxels_per_subject: 5,
            brain_noise_sd: 0.5,
            rep_noise_sd: 0.1,
            seed: 4,
            models: vec![ModelSpec {
                id: "m".into(),
                rep_dim: 4,
                shared_fraction: 1.0,
            }],
            eval: None,
        };
        let world = generate(&s).unwrap();
        let manifest_path = write_world(&world, &s.eval_settings(), dir.path()).unwrap();
        let manifest = ExperimentManifest::load(&manifest_path).unwrap();
        assert_eq!(manifest.subjects.len(), 2);
        assert_eq!(manifest.models.len(), 1);
        assert_eq!(manifest.eval.seed, 4);
        let sub = LabeledMatrix::load(
            &manifest.resolve(&manifest.subjects[0]),
            MatrixFormat::Binary,
        )
        .unwrap();
        for (a, b) in sub.values().iter().zip(world.subjects[0].1.values().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn spec_round_trips_through_toml() {
        let s = spec(vec![ModelSpec {
            id: "m".into(),
            rep_dim: 4,
            shared_fraction: 0.25,
        }]);
        let text = toml::to_string_pretty(&s).unwrap();
        let back: WorldSpec = toml::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
