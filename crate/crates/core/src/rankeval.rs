//! Rank-retrieval scoring of decoder predictions.
//!
//! For each predicted representation, all candidate representations are
//! ranked by cosine distance; the score of the prediction is the 0-based
//! position of the true stimulus's representation (perfect = 0, chance =
//! `(n-1)/2`). Equal distances take the mid-rank, so scores are
//! deterministic and invariant to candidate order even with duplicated
//! candidates. Per-sentence scores average to a per-subject rank, and the
//! unweighted mean over subjects is the model's mean average rank (MAR).
//! Uncertainty comes from a percentile bootstrap over sentences.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::decoder::PredictionSet;
use crate::error::{Error, Result};
use crate::matrix::LabeledMatrix;
use crate::rng;

/// Cosine distance `1 − u·v/(‖u‖‖v‖)`, in `[0, 2]`. Zero-norm operands are
/// an error: a zero predicted representation signals an upstream failure
/// and must not be papered over with a distance convention.
pub fn cosine_distance(u: &ArrayView1<'_, f64>, v: &ArrayView1<'_, f64>) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "cosine distance of lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    if u.is_empty() {
        return Err(Error::EmptyInput("cosine distance of empty vectors".into()));
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v.iter()) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 {
        return Err(Error::ZeroVector("left operand of cosine distance".into()));
    }
    if nv == 0.0 {
        return Err(Error::ZeroVector("right operand of cosine distance".into()));
    }
    Ok(1.0 - dot / (nu.sqrt() * nv.sqrt()))
}

/// Mid-rank position of the true candidate among all candidates, ordered
/// by cosine distance to `prediction`:
/// `#{j : d_j < d_true} + ½·#{j ≠ true : d_j = d_true}`.
pub fn rank_score(
    prediction: &ArrayView1<'_, f64>,
    candidates: &ArrayView2<'_, f64>,
    true_index: usize,
) -> Result<f64> {
    let n = candidates.nrows();
    if n < 2 {
        return Err(Error::EmptyInput(format!(
            "need at least 2 candidates, found {n}"
        )));
    }
    if true_index >= n {
        return Err(Error::InvalidConfig(format!(
            "true_index {true_index} out of range for {n} candidates"
        )));
    }
    let d_true = cosine_distance(prediction, &candidates.row(true_index))?;
    let mut below = 0usize;
    let mut tied = 0usize;
    for (j, c) in candidates.rows().into_iter().enumerate() {
        if j == true_index {
            continue;
        }
        let d = cosine_distance(prediction, &c)?;
        if d < d_true {
            below += 1;
        } else if d == d_true {
            tied += 1;
        }
    }
    Ok(below as f64 + 0.5 * tied as f64)
}

/// Per-subject rank scores plus their average.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SubjectRanks {
    pub subject_id: String,
    /// One mid-rank score per stimulus, canonical order.
    pub ranks: Vec<f64>,
    pub avg_rank: f64,
}

/// Rank evaluation of one model across subjects.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RankReport {
    pub model_id: String,
    pub per_subject: Vec<SubjectRanks>,
    /// Unweighted mean over subjects of the per-subject average ranks.
    pub mar: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Expected rank of a random prediction: `(n−1)/2`.
    pub chance_level: f64,
    pub stimulus_ids: Vec<String>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Score one model: per-sentence ranks per subject, per-subject averages,
/// MAR, and a sentence-resampled bootstrap interval (`replicates` draws,
/// 95% level, keyed on `seed` and the model ID).
pub fn mean_average_rank(
    predictions: &[PredictionSet],
    candidates: &LabeledMatrix,
    replicates: usize,
    seed: u64,
) -> Result<RankReport> {
    if predictions.is_empty() {
        return Err(Error::EmptyInput("no prediction sets".into()));
    }
    let model_id = predictions[0].model_id.clone();
    for p in predictions {
        if p.model_id != model_id {
            return Err(Error::Misaligned(format!(
                "prediction sets mix models '{model_id}' and '{}'",
                p.model_id
            )));
        }
        if p.y_hat.stimulus_ids() != candidates.stimulus_ids() {
            return Err(Error::Misaligned(format!(
                "subject '{}' predictions are not aligned with the candidate matrix",
                p.subject_id
            )));
        }
    }

    let n = candidates.nrows();
    let cand = candidates.values();
    let mut per_subject = Vec::with_capacity(predictions.len());
    for p in predictions {
        let y_hat = p.y_hat.values();
        let mut ranks = Vec::with_capacity(n);
        for i in 0..n {
            ranks.push(rank_score(&y_hat.row(i), &cand, i)?);
        }
        let avg_rank = mean(&ranks);
        per_subject.push(SubjectRanks {
            subject_id: p.subject_id.clone(),
            ranks,
            avg_rank,
        });
    }

    let avgs: Vec<f64> = per_subject.iter().map(|s| s.avg_rank).collect();
    let mar = mean(&avgs);

    let mut stats = Array2::<f64>::zeros((per_subject.len(), n));
    for (s, subj) in per_subject.iter().enumerate() {
        for (i, r) in subj.ranks.iter().enumerate() {
            stats[[s, i]] = *r;
        }
    }
    let (mut ci_low, mut ci_high) = bootstrap_ci(
        &stats.view(),
        replicates,
        0.95,
        rng::derive_seed(seed, &["bootstrap", &model_id]),
    )?;
    // Percentile intervals from finitely many resamples can miss the point
    // estimate by a hair; keep the report self-consistent.
    ci_low = ci_low.min(mar);
    ci_high = ci_high.max(mar);

    Ok(RankReport {
        model_id,
        per_subject,
        mar,
        ci_low,
        ci_high,
        chance_level: (n as f64 - 1.0) / 2.0,
        stimulus_ids: candidates.stimulus_ids().to_vec(),
    })
}

/// Percentile bootstrap interval for the grand mean of a subjects×sentences
/// statistic matrix. Each replicate resamples sentence indices with
/// replacement, shared across subjects; deterministic given `seed`.
pub fn bootstrap_ci(
    per_sentence_stats: &ArrayView2<'_, f64>,
    replicates: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    use rand::Rng;
    let (n_subjects, n) = per_sentence_stats.dim();
    if n_subjects == 0 || n == 0 {
        return Err(Error::EmptyInput("bootstrap over an empty matrix".into()));
    }
    if replicates == 0 {
        return Err(Error::InvalidConfig(
            "bootstrap replicates must be at least 1".into(),
        ));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "confidence level {level} outside (0, 1)"
        )));
    }

    let mut stream = rng::stream(seed, &["bootstrap_ci"]);
    let denom = (n_subjects * n) as f64;
    let mut stats = Vec::with_capacity(replicates);
    let mut draw = vec![0usize; n];
    for _ in 0..replicates {
        for slot in draw.iter_mut() {
            *slot = stream.random_range(0..n);
        }
        let mut total = 0.0;
        for s in 0..n_subjects {
            let row = per_sentence_stats.row(s);
            for &i in &draw {
                total += row[i];
            }
        }
        stats.push(total / denom);
    }
    stats.sort_by(|a, b| a.total_cmp(b));

    let q = (1.0 - level) / 2.0;
    Ok((percentile(&stats, q), percentile(&stats, 1.0 - q)))
}

/// Linear-interpolated percentile of a sorted sample.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let last = sorted.len() - 1;
    let pos = q * last as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

impl RankReport {
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::InvalidConfig(format!(
            "rank report serialization failed: {e}"
        )))
    }

    pub fn from_toml_str(text: &str) -> Result<RankReport> {
        toml::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("rank report parse failed: {e}")))
    }

    /// Flat per-sentence CSV: `model_id,subject_id,stimulus_id,rank`.
    pub fn ranks_csv(&self) -> String {
        let mut out = String::from("model_id,subject_id,stimulus_id,rank\n");
        for subj in &self.per_subject {
            for (stim, rank) in self.stimulus_ids.iter().zip(subj.ranks.iter()) {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    self.model_id, subj.subject_id, stim, rank
                ));
            }
        }
        out
    }
}
