//! End-to-end library tests: world generation through the decoder grid to
//! rank reports, exercising the file-based grid runner.

use braindec_core::decoder::{self, PredictionMode};
use braindec_core::manifest::{EvalSettings, ExperimentManifest};
use braindec_core::rankeval::mean_average_rank;
use braindec_core::synth::{self, ModelSpec, WorldSpec};
use braindec_core::Error;

fn small_world_spec() -> WorldSpec {
    WorldSpec {
        n_stimuli: 48,
        latent_dim: 4,
        n_subjects: 2,
        voxels_per_subject: 12,
        brain_noise_sd: 0.3,
        rep_noise_sd: 0.05,
        seed: 99,
        models: vec![
            ModelSpec {
                id: "m1".into(),
                rep_dim: 6,
                shared_fraction: 1.0,
            },
            ModelSpec {
                id: "m2".into(),
                rep_dim: 6,
                shared_fraction: 0.5,
            },
            ModelSpec {
                id: "m3".into(),
                rep_dim: 6,
                shared_fraction: 0.0,
            },
        ],
        eval: Some(EvalSettings {
            folds: 4,
            inner_folds: 3,
            alpha_grid: vec![1e-3, 1e-1, 1e1, 1e3],
            standardize: true,
            bootstrap_replicates: 200,
            seed: 99,
        }),
    }
}

fn write_world(dir: &std::path::Path) -> ExperimentManifest {
    let spec = small_world_spec();
    let world = synth::generate(&spec).unwrap();
    let manifest_path = synth::write_world(&world, &spec.eval_settings(), dir).unwrap();
    ExperimentManifest::load(&manifest_path).unwrap()
}

#[test]
fn grid_produces_one_prediction_per_pair() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_world(dir.path());
    let predictions = decoder::run_grid(&manifest, PredictionMode::CrossValidated).unwrap();
    assert_eq!(predictions.len(), 2 * 3);
    // subject-major manifest order
    assert_eq!(predictions[0].subject_id, "sub1");
    assert_eq!(predictions[0].model_id, "m1");
    assert_eq!(predictions[5].subject_id, "sub2");
    assert_eq!(predictions[5].model_id, "m3");
}

#[test]
fn grid_output_is_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_world(dir.path());
    let run_with = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| decoder::run_grid(&manifest, PredictionMode::CrossValidated).unwrap())
    };
    let a = run_with(1);
    let b = run_with(8);
    assert_eq!(a.len(), b.len());
    for (pa, pb) in a.iter().zip(b.iter()) {
        assert_eq!(pa.digest_bytes(), pb.digest_bytes());
    }
}

#[test]
fn deleting_a_model_leaves_other_pairs_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let mut manifest = write_world(dir.path());
    let full = decoder::run_grid(&manifest, PredictionMode::CrossValidated).unwrap();
    manifest.models.remove(1); // drop m2
    let reduced = decoder::run_grid(&manifest, PredictionMode::CrossValidated).unwrap();
    let find = |preds: &[decoder::PredictionSet], s: &str, m: &str| -> Vec<u8> {
        preds
            .iter()
            .find(|p| p.subject_id == s && p.model_id == m)
            .unwrap()
            .digest_bytes()
    };
    for subject in ["sub1", "sub2"] {
        for model in ["m1", "m3"] {
            assert_eq!(
                find(&full, subject, model),
                find(&reduced, subject, model),
                "pair ({subject}, {model}) changed"
            );
        }
    }
}

#[test]
fn unreadable_matrix_names_subject_and_path() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_world(dir.path());
    std::fs::remove_file(dir.path().join("matrices/sub2.rdmx")).unwrap();
    let err = decoder::run_grid(&manifest, PredictionMode::CrossValidated).unwrap_err();
    match &err {
        Error::EntityMatrix { kind, id, path, .. } => {
            assert_eq!(*kind, "subject");
            assert_eq!(id, "sub2");
            assert!(path.ends_with("matrices/sub2.rdmx"));
        }
        other => panic!("expected EntityMatrix, got {other}"),
    }
}

#[test]
fn shared_fraction_orders_the_rank_reports() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_world(dir.path());
    let predictions = decoder::run_grid(&manifest, PredictionMode::CrossValidated).unwrap();

    let mut mars = Vec::new();
    for model in &manifest.models {
        let candidates = braindec_core::LabeledMatrix::load(
            &manifest.resolve(model),
            braindec_core::MatrixFormat::Binary,
        )
        .unwrap()
        .align(&manifest.stimulus_ids)
        .unwrap();
        let sets: Vec<_> = predictions
            .iter()
            .filter(|p| p.model_id == model.id)
            .cloned()
            .collect();
        let report = mean_average_rank(&sets, &candidates, 200, manifest.eval.seed).unwrap();
        mars.push(report.mar);
    }
    // m1 fully shared, m2 half, m3 unshared: decodability must degrade.
    assert!(
        mars[0] < mars[1] && mars[1] < mars[2],
        "MARs not ordered: {mars:?}"
    );
    // chance for 48 candidates is 23.5; the unshared model sits near it.
    assert!((mars[2] - 23.5).abs() < 8.0, "unshared MAR {}", mars[2]);
}
