//! Closed-form multi-output ridge regression with cross-validated
//! regularization selection.
//!
//! The objective averages the squared error over rows but leaves the
//! penalty unscaled:
//!
//! ```text
//! J(θ) = (1/n) Σᵢ ‖xᵢᵀθ − yᵢ‖² + α‖θ‖²
//! ```
//!
//! which is exactly the normal-equation system `(XᵀX + nαI)θ = XᵀY`. Users
//! coming from conventions that penalize `α` without the `n` factor should
//! divide their `α` by the row count.
//!
//! Two algebraically equivalent solution paths are provided and checked
//! against each other in the test suite: a primal Cholesky factorization of
//! the `d×d` system, and a dual factorization of the `n×n` Gram system
//! `θ = Xᵀ(XXᵀ + nαI)⁻¹Y` for the wide case (`d ≫ n`, e.g. voxel inputs).

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::{LabeledMatrix, MatrixFormat};
use crate::rng;

/// Which normal-equation formulation to factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverPolicy {
    /// Primal when `d_in ≤ n`, dual otherwise.
    #[default]
    Auto,
    /// Cholesky on the `d_in×d_in` system.
    Primal,
    /// Cholesky on the `n×n` Gram system.
    Dual,
}

/// Ridge solver settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeConfig {
    /// Candidate regularization strengths; positive, strictly increasing.
    pub alpha_grid: Vec<f64>,
    /// Z-score input columns using statistics fit on the training rows.
    pub standardize: bool,
    pub solver_policy: SolverPolicy,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        RidgeConfig {
            // 10 log-spaced points, 1e-3 ..= 1e6.
            alpha_grid: (-3..=6).map(|e| 10f64.powi(e)).collect(),
            standardize: true,
            solver_policy: SolverPolicy::Auto,
        }
    }
}

impl RidgeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_grid.is_empty() {
            return Err(Error::InvalidConfig("alpha_grid is empty".into()));
        }
        for (i, a) in self.alpha_grid.iter().enumerate() {
            if !(a.is_finite() && *a > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "alpha_grid[{i}] = {a} is not a positive finite number"
                )));
            }
            if i > 0 && self.alpha_grid[i - 1] >= *a {
                return Err(Error::InvalidConfig(format!(
                    "alpha_grid must be strictly increasing (entries {} and {i})",
                    i - 1
                )));
            }
        }
        Ok(())
    }
}

/// A learned linear map plus the preprocessing frozen at fit time.
#[derive(Debug, Clone)]
pub struct RidgeFit {
    weights: Array2<f64>,
    input_means: Option<Array1<f64>>,
    input_scales: Option<Array1<f64>>,
    alpha_used: f64,
}

impl RidgeFit {
    /// Assemble a fit from raw parts (weights applied to standardized
    /// inputs when means/scales are present). Scales must be positive.
    pub fn from_parts(
        weights: Array2<f64>,
        input_means: Option<Array1<f64>>,
        input_scales: Option<Array1<f64>>,
        alpha_used: f64,
    ) -> Result<RidgeFit> {
        match (&input_means, &input_scales) {
            (Some(m), Some(s)) => {
                if m.len() != weights.nrows() || s.len() != weights.nrows() {
                    return Err(Error::DimensionMismatch(format!(
                        "standardization stats length {} vs {} weight rows",
                        m.len(),
                        weights.nrows()
                    )));
                }
                if s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::InvalidConfig(
                        "input_scales must be strictly positive".into(),
                    ));
                }
            }
            (None, None) => {}
            _ => {
                return Err(Error::InvalidConfig(
                    "input_means and input_scales must be provided together".into(),
                ))
            }
        }
        Ok(RidgeFit {
            weights,
            input_means,
            input_scales,
            alpha_used,
        })
    }

    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    pub fn alpha_used(&self) -> f64 {
        self.alpha_used
    }

    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn input_means(&self) -> Option<&Array1<f64>> {
        self.input_means.as_ref()
    }

    pub fn input_scales(&self) -> Option<&Array1<f64>> {
        self.input_scales.as_ref()
    }

    /// Apply the map: standardize `x` with the frozen statistics, then
    /// multiply by the weights.
    pub fn predict(&self, x: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.weights.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "predict: input has {} columns, fit expects {}",
                x.ncols(),
                self.weights.nrows()
            )));
        }
        match (&self.input_means, &self.input_scales) {
            (Some(means), Some(scales)) => {
                let mut xs = x.to_owned();
                standardize_in_place(&mut xs, means, scales);
                Ok(xs.dot(&self.weights))
            }
            _ => Ok(x.dot(&self.weights)),
        }
    }

    /// Persist to `<base>.weights.rdmx` (+ `<base>.stats.rdmx` when
    /// standardized) and a `<base>.toml` sidecar.
    pub fn save(&self, base: &Path) -> Result<()> {
        let weights_path = sibling(base, "weights.rdmx");
        let ids = (0..self.weights.nrows()).map(|i| format!("in{i}")).collect();
        LabeledMatrix::new(ids, self.weights.clone())?
            .save(&weights_path, MatrixFormat::Binary)?;

        let standardize = self.input_means.is_some();
        if let (Some(means), Some(scales)) = (&self.input_means, &self.input_scales) {
            let stats_path = sibling(base, "stats.rdmx");
            let mut stats = Array2::zeros((2, means.len()));
            stats.row_mut(0).assign(means);
            stats.row_mut(1).assign(scales);
            LabeledMatrix::new(
                vec!["input_means".into(), "input_scales".into()],
                stats,
            )?
            .save(&stats_path, MatrixFormat::Binary)?;
        }

        let meta = FitSidecar {
            alpha_used: self.alpha_used,
            standardize,
            input_dim: self.weights.nrows(),
            output_dim: self.weights.ncols(),
        };
        let sidecar = sibling(base, "toml");
        let text = toml::to_string_pretty(&meta)
            .map_err(|e| Error::bad_file(&sidecar, format!("serialization failed: {e}")))?;
        std::fs::write(&sidecar, text).map_err(|e| Error::io(&sidecar, e))
    }

    pub fn load(base: &Path) -> Result<RidgeFit> {
        let sidecar = sibling(base, "toml");
        let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let meta: FitSidecar =
            toml::from_str(&text).map_err(|e| Error::bad_file(&sidecar, e.to_string()))?;

        let weights = LabeledMatrix::load(&sibling(base, "weights.rdmx"), MatrixFormat::Binary)?;
        let (_, weights) = weights.into_parts();
        if weights.nrows() != meta.input_dim || weights.ncols() != meta.output_dim {
            return Err(Error::bad_file(
                &sidecar,
                format!(
                    "sidecar says {}x{}, weights file is {}x{}",
                    meta.input_dim,
                    meta.output_dim,
                    weights.nrows(),
                    weights.ncols()
                ),
            ));
        }
        let (means, scales) = if meta.standardize {
            let stats = LabeledMatrix::load(&sibling(base, "stats.rdmx"), MatrixFormat::Binary)?;
            let (_, stats) = stats.into_parts();
            (
                Some(stats.row(0).to_owned()),
                Some(stats.row(1).to_owned()),
            )
        } else {
            (None, None)
        };
        RidgeFit::from_parts(weights, means, scales, meta.alpha_used)
    }
}

#[derive(Serialize, Deserialize)]
struct FitSidecar {
    alpha_used: f64,
    standardize: bool,
    input_dim: usize,
    output_dim: usize,
}

fn sibling(base: &Path, suffix: &str) -> PathBuf {
    let mut name = base
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "fit".into());
    name.push('.');
    name.push_str(suffix);
    base.with_file_name(name)
}

fn standardize_in_place(x: &mut Array2<f64>, means: &Array1<f64>, scales: &Array1<f64>) {
    for (j, mut col) in x.columns_mut().into_iter().enumerate() {
        let m = means[j];
        let s = scales[j];
        col.mapv_inplace(|v| (v - m) / s);
    }
}

/// Per-column mean and population standard deviation; zero-variance
/// columns get scale 1 so standardization stays defined.
fn column_stats(x: &ArrayView2<'_, f64>) -> (Array1<f64>, Array1<f64>) {
    let n = x.nrows() as f64;
    let means = x.mean_axis(Axis(0)).expect("nonempty");
    let mut scales = Array1::zeros(x.ncols());
    for (j, col) in x.columns().into_iter().enumerate() {
        let m = means[j];
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        let sd = var.sqrt();
        scales[j] = if sd > 0.0 { sd } else { 1.0 };
    }
    (means, scales)
}

/// Shared precomputation for solving the same design at several alphas:
/// standardized inputs plus the alpha-independent blocks of the normal
/// equations.
struct PreparedDesign {
    xs: Array2<f64>,
    stats: Option<(Array1<f64>, Array1<f64>)>,
    primal: bool,
    lhs_base: Array2<f64>,
    rhs: Array2<f64>,
    n: usize,
}

impl PreparedDesign {
    fn new(x: &ArrayView2<'_, f64>, y: &ArrayView2<'_, f64>, cfg: &RidgeConfig) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "X has {} rows, Y has {}",
                x.nrows(),
                y.nrows()
            )));
        }
        if x.nrows() < 2 {
            return Err(Error::DimensionMismatch(format!(
                "need at least 2 rows, found {}",
                x.nrows()
            )));
        }
        let (xs, stats) = if cfg.standardize {
            let (means, scales) = column_stats(x);
            let mut xs = x.to_owned();
            standardize_in_place(&mut xs, &means, &scales);
            (xs, Some((means, scales)))
        } else {
            (x.to_owned(), None)
        };
        let n = xs.nrows();
        let primal = match cfg.solver_policy {
            SolverPolicy::Primal => true,
            SolverPolicy::Dual => false,
            SolverPolicy::Auto => xs.ncols() <= n,
        };
        let (lhs_base, rhs) = if primal {
            (xs.t().dot(&xs), xs.t().dot(y))
        } else {
            (xs.dot(&xs.t()), y.to_owned())
        };
        Ok(PreparedDesign {
            xs,
            stats,
            primal,
            lhs_base,
            rhs,
            n,
        })
    }

    fn weights(&self, alpha: f64) -> Result<Array2<f64>> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha = {alpha} must be finite and non-negative"
            )));
        }
        let lambda = self.n as f64 * alpha;
        let mut lhs = self.lhs_base.clone();
        for i in 0..lhs.nrows() {
            lhs[[i, i]] += lambda;
        }
        let solved = linalg::solve_spd(&lhs.view(), &self.rhs.view())
            .ok_or(Error::SingularSystem { alpha })?;
        Ok(if self.primal {
            solved
        } else {
            self.xs.t().dot(&solved)
        })
    }

    fn into_fit(self, alpha: f64) -> Result<RidgeFit> {
        let weights = self.weights(alpha)?;
        let (means, scales) = match self.stats {
            Some((m, s)) => (Some(m), Some(s)),
            None => (None, None),
        };
        RidgeFit::from_parts(weights, means, scales, alpha)
    }
}

/// Fit ridge weights for the given `alpha`. `alpha = 0` is accepted only
/// when the (possibly standardized) design is full rank.
pub fn fit(
    x: &ArrayView2<'_, f64>,
    y: &ArrayView2<'_, f64>,
    alpha: f64,
    cfg: &RidgeConfig,
) -> Result<RidgeFit> {
    PreparedDesign::new(x, y, cfg)?.into_fit(alpha)
}

/// Deterministic k-fold partition: row indices shuffled by a stream keyed
/// on `seed`, then split into contiguous chunks whose sizes differ by at
/// most one. Returns the held-out index set of each fold.
pub fn cv_folds(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    assert!(k >= 2 && k <= n, "need 2 <= k <= n");
    let mut order: Vec<usize> = (0..n).collect();
    let mut stream = rng::stream(seed, &["cv_folds"]);
    order.shuffle(&mut stream);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(order[start..start + size].to_vec());
        start += size;
    }
    folds
}

/// Result of cross-validated alpha selection.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSelection {
    pub best_alpha: f64,
    /// Mean out-of-fold squared error per grid entry, pooled over all
    /// held-out cells.
    pub cv_mse: Vec<f64>,
}

/// Pick the alpha in `cfg.alpha_grid` minimizing mean out-of-fold squared
/// error under a deterministic k-fold split. Exact ties go to the larger
/// alpha.
pub fn select_alpha(
    x: &ArrayView2<'_, f64>,
    y: &ArrayView2<'_, f64>,
    cfg: &RidgeConfig,
    folds: usize,
    seed: u64,
) -> Result<AlphaSelection> {
    cfg.validate()?;
    let n = x.nrows();
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "X has {} rows, Y has {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if folds < 2 {
        return Err(Error::InvalidConfig(format!(
            "folds must be at least 2, found {folds}"
        )));
    }
    if n < folds {
        return Err(Error::InvalidConfig(format!(
            "fewer rows ({n}) than folds ({folds})"
        )));
    }
    let largest_fold = n / folds + usize::from(n % folds > 0);
    if n - largest_fold < 2 {
        return Err(Error::InvalidConfig(format!(
            "cross-validation with {folds} folds on {n} rows leaves fewer than 2 training rows"
        )));
    }

    if cfg.alpha_grid.len() == 1 {
        return Ok(AlphaSelection {
            best_alpha: cfg.alpha_grid[0],
            cv_mse: vec![f64::NAN],
        });
    }

    let all: Vec<usize> = (0..n).collect();
    let mut sq_err = vec![0.0f64; cfg.alpha_grid.len()];
    let mut cells = 0usize;
    for held_out in cv_folds(n, folds, seed) {
        let held: std::collections::HashSet<usize> = held_out.iter().copied().collect();
        let train_idx: Vec<usize> = all.iter().copied().filter(|i| !held.contains(i)).collect();
        let x_train = x.select(Axis(0), &train_idx);
        let y_train = y.select(Axis(0), &train_idx);
        let x_test = x.select(Axis(0), &held_out);
        let y_test = y.select(Axis(0), &held_out);

        let design = PreparedDesign::new(&x_train.view(), &y_train.view(), cfg)?;
        let xs_test = match &design.stats {
            Some((means, scales)) => {
                let mut t = x_test.clone();
                standardize_in_place(&mut t, means, scales);
                t
            }
            None => x_test.clone(),
        };
        for (ai, alpha) in cfg.alpha_grid.iter().enumerate() {
            let weights = design.weights(*alpha)?;
            let pred = xs_test.dot(&weights);
            let mut s = 0.0;
            for (p, t) in pred.iter().zip(y_test.iter()) {
                let d = p - t;
                s += d * d;
            }
            sq_err[ai] += s;
        }
        cells += held_out.len() * y.ncols();
    }

    let cv_mse: Vec<f64> = sq_err.iter().map(|s| s / cells as f64).collect();
    let mut best = 0;
    for (i, mse) in cv_mse.iter().enumerate() {
        if *mse <= cv_mse[best] {
            best = i;
        }
    }
    Ok(AlphaSelection {
        best_alpha: cfg.alpha_grid[best],
        cv_mse,
    })
}
