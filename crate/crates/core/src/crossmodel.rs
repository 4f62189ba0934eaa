//! Pairwise model-to-model representation predictivity.
//!
//! For every ordered pair of models, a ridge regression maps the row
//! model's (column-standardized) representations onto the column model's,
//! and the cell records the pooled multi-output r² of those predictions.
//! The diagonal is computed by the same code path and serves as a sanity
//! check: with in-sample predictions and minimal regularization it must be
//! 1 to high precision.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::decoder::PredictionMode;
use crate::error::{Error, Result};
use crate::matrix::LabeledMatrix;
use crate::ridge::{self, RidgeConfig};
use crate::rng;

/// How the regularization strength is chosen for each cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaPolicy {
    /// One fixed alpha for every cell (diagnostics; use a tiny value for
    /// the diagonal sanity check).
    Fixed(f64),
    /// Per-cell nested selection over the config's grid.
    CrossValidated,
}

/// Square matrix of r² values: entry `(i, j)` scores the regression from
/// model `i`'s representations to model `j`'s.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictivityMatrix {
    pub model_ids: Vec<String>,
    pub values: Array2<f64>,
    pub mode: PredictionMode,
    pub alpha_policy: AlphaPolicy,
}

/// Pooled multi-output r²: one minus the ratio of the total squared
/// residual to the total squared deviation of `y_true` from its column
/// means. Can be negative for out-of-sample predictions.
pub fn r2_multioutput(
    y_true: &ArrayView2<'_, f64>,
    y_pred: &ArrayView2<'_, f64>,
) -> Result<f64> {
    if y_true.dim() != y_pred.dim() {
        return Err(Error::DimensionMismatch(format!(
            "r²: shapes {:?} and {:?}",
            y_true.dim(),
            y_pred.dim()
        )));
    }
    if y_true.nrows() < 2 {
        return Err(Error::DimensionMismatch(format!(
            "r²: need at least 2 rows, found {}",
            y_true.nrows()
        )));
    }
    let col_means = y_true.mean_axis(Axis(0)).expect("nonempty");
    let mut ss_tot = 0.0;
    let mut ss_res = 0.0;
    for (row_t, row_p) in y_true.rows().into_iter().zip(y_pred.rows()) {
        for ((t, p), m) in row_t.iter().zip(row_p.iter()).zip(col_means.iter()) {
            ss_tot += (t - m) * (t - m);
            ss_res += (t - p) * (t - p);
        }
    }
    if ss_tot == 0.0 {
        return Err(Error::Degenerate(
            "r²: target matrix has zero total variance".into(),
        ));
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// Z-score every column (population SD; zero-variance columns pass
/// through unscaled).
fn standardize_columns(values: &ArrayView2<'_, f64>) -> Array2<f64> {
    let n = values.nrows() as f64;
    let mut out = values.to_owned();
    for mut col in out.columns_mut() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        let scale = if sd > 0.0 { sd } else { 1.0 };
        col.mapv_inplace(|v| (v - mean) / scale);
    }
    out
}

fn cell_r2(
    x: &Array2<f64>,
    y: &Array2<f64>,
    cfg: &RidgeConfig,
    mode: PredictionMode,
    policy: AlphaPolicy,
    folds: usize,
    inner_folds: usize,
    seed: u64,
    id_from: &str,
    id_to: &str,
) -> Result<f64> {
    let n = x.nrows();
    let pick_alpha = |xv: &ArrayView2<'_, f64>, yv: &ArrayView2<'_, f64>, key: &str| -> Result<f64> {
        match policy {
            AlphaPolicy::Fixed(a) => Ok(a),
            AlphaPolicy::CrossValidated => {
                let sel_seed = rng::derive_seed(seed, &["crossmodel-alpha", id_from, id_to, key]);
                Ok(ridge::select_alpha(xv, yv, cfg, inner_folds, sel_seed)?.best_alpha)
            }
        }
    };

    let predictions = match mode {
        PredictionMode::InSample => {
            let alpha = pick_alpha(&x.view(), &y.view(), "global")?;
            let fitted = ridge::fit(&x.view(), &y.view(), alpha, cfg)?;
            fitted.predict(&x.view())?
        }
        PredictionMode::CrossValidated => {
            use rand::seq::SliceRandom;
            let mut order: Vec<usize> = (0..n).collect();
            let mut stream = rng::stream(seed, &["crossmodel-folds", id_from, id_to]);
            order.shuffle(&mut stream);
            let base = n / folds;
            let extra = n % folds;
            let mut fold_of = vec![0u32; n];
            let mut start = 0;
            for f in 0..folds {
                let size = base + usize::from(f < extra);
                for &row in &order[start..start + size] {
                    fold_of[row] = f as u32;
                }
                start += size;
            }

            let mut out = Array2::<f64>::zeros((n, y.ncols()));
            for fold in 0..folds as u32 {
                let test_idx: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
                let train_idx: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
                let xt = x.select(Axis(0), &train_idx);
                let yt = y.select(Axis(0), &train_idx);
                let alpha = pick_alpha(&xt.view(), &yt.view(), &fold.to_string())?;
                let fitted = ridge::fit(&xt.view(), &yt.view(), alpha, cfg)?;
                let pred = fitted.predict(&x.select(Axis(0), &test_idx).view())?;
                for (local, &row) in test_idx.iter().enumerate() {
                    out.row_mut(row).assign(&pred.row(local));
                }
            }
            out
        }
    };
    r2_multioutput(&y.view(), &predictions.view())
}

/// Compute the full M×M predictivity matrix. All model matrices must share
/// the same stimulus order; representations are column-standardized before
/// regression, and r² is measured on the standardized targets.
pub fn pairwise_predictivity(
    models: &[(String, LabeledMatrix)],
    cfg: &RidgeConfig,
    mode: PredictionMode,
    policy: AlphaPolicy,
    folds: usize,
    inner_folds: usize,
    seed: u64,
) -> Result<PredictivityMatrix> {
    if models.is_empty() {
        return Err(Error::EmptyInput("no models".into()));
    }
    cfg.validate()?;
    let reference_ids = models[0].1.stimulus_ids();
    for (id, m) in models {
        if m.stimulus_ids() != reference_ids {
            return Err(Error::Misaligned(format!(
                "model '{id}' is not aligned with '{}'",
                models[0].0
            )));
        }
    }

    let standardized: Vec<(String, Array2<f64>)> = models
        .iter()
        .map(|(id, m)| (id.clone(), standardize_columns(&m.values())))
        .collect();

    let m = standardized.len();
    let cells: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .collect();
    let computed: Vec<f64> = cells
        .par_iter()
        .map(|&(i, j)| {
            cell_r2(
                &standardized[i].1,
                &standardized[j].1,
                cfg,
                mode,
                policy,
                folds,
                inner_folds,
                seed,
                &standardized[i].0,
                &standardized[j].0,
            )
        })
        .collect::<Result<_>>()?;

    let mut values = Array2::<f64>::zeros((m, m));
    for (&(i, j), v) in cells.iter().zip(computed.iter()) {
        values[[i, j]] = *v;
    }
    Ok(PredictivityMatrix {
        model_ids: standardized.into_iter().map(|(id, _)| id).collect(),
        values,
        mode,
        alpha_policy: policy,
    })
}

impl PredictivityMatrix {
    /// CSV rendering: header `model_id,<ids...>`, one row per source model.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("model_id");
        for id in &self.model_ids {
            let _ = write!(out, ",{id}");
        }
        out.push('\n');
        for (i, id) in self.model_ids.iter().enumerate() {
            out.push_str(id);
            for j in 0..self.model_ids.len() {
                let _ = write!(out, ",{}", self.values[[i, j]]);
            }
            out.push('\n');
        }
        out
    }

    /// SVG heatmap: one 56×56 px cell per ordered pair in a grid with a
    /// 120 px label gutter on the left and 40 px on top. Cell fill is a
    /// linear grayscale over [0, 1] (values clamped; 1 = black) with the
    /// value printed in each cell.
    pub fn to_svg_string(&self) -> String {
        const CELL: usize = 56;
        const LEFT: usize = 120;
        const TOP: usize = 40;
        let m = self.model_ids.len();
        let width = LEFT + m * CELL;
        let height = TOP + m * CELL;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="monospace" font-size="11">"#
        );
        let _ = writeln!(
            svg,
            r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#
        );
        for (j, id) in self.model_ids.iter().enumerate() {
            let x = LEFT + j * CELL + CELL / 2;
            let _ = writeln!(
                svg,
                r#"<text x="{x}" y="{}" text-anchor="middle">{id}</text>"#,
                TOP - 12
            );
        }
        for (i, id) in self.model_ids.iter().enumerate() {
            let y = TOP + i * CELL + CELL / 2 + 4;
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{y}" text-anchor="end">{id}</text>"#,
                LEFT - 8
            );
        }
        for i in 0..m {
            for j in 0..m {
                let v = self.values[[i, j]];
                let clamped = v.clamp(0.0, 1.0);
                let gray = (255.0 * (1.0 - clamped)).round() as u8;
                let text_color = if clamped > 0.5 { "white" } else { "black" };
                let x = LEFT + j * CELL;
                let y = TOP + i * CELL;
                let _ = writeln!(
                    svg,
                    r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="#{gray:02x}{gray:02x}{gray:02x}" stroke="#888"/>"##
                );
                let _ = writeln!(
                    svg,
                    r#"<text x="{}" y="{}" text-anchor="middle" fill="{text_color}">{:.2}</text>"#,
                    x + CELL / 2,
                    y + CELL / 2 + 4,
                    v
                );
            }
        }
        svg.push_str("</svg>\n");
        svg
    }
}
