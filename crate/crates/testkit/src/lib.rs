//! Independent oracles and generators for the test suites.
//!
//! Everything in this crate deliberately avoids the production code paths:
//! the ridge oracle solves the normal equations in exact rational
//! arithmetic, the rank oracle sorts distances instead of counting, and
//! cross-validation errors are re-derived by plain enumeration with a
//! pivoted Gaussian elimination. These routines are slow and simple on
//! purpose.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::Rng;
use rand_distr::StandardNormal;

// --- generators ---

/// Dense standard-normal matrix drawn from `rng`.
pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    Array2::from_shape_vec((rows, cols), data).expect("shape matches buffer")
}

/// Matrix of dyadic rationals `k/1024`, `|k| <= 2048`. These are exact in
/// both `f64` and `BigRational`, which keeps the rational oracle fast.
pub fn random_dyadic_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.random_range(-2048i32..=2048) as f64 / 1024.0)
        .collect();
    Array2::from_shape_vec((rows, cols), data).expect("shape matches buffer")
}

/// Random orthogonal matrix via Gram-Schmidt on a Gaussian draw.
pub fn random_orthogonal<R: Rng>(rng: &mut R, n: usize) -> Array2<f64> {
    let a = random_matrix(rng, n, n);
    let mut q = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut v = a.column(j).to_owned();
        // two passes of re-orthogonalization for stability
        for _ in 0..2 {
            for i in 0..j {
                let qi = q.column(i);
                let proj = v.dot(&qi);
                v = &v - &(&qi * proj);
            }
        }
        let norm = v.dot(&v).sqrt();
        assert!(norm > 1e-10, "degenerate Gaussian draw");
        q.column_mut(j).assign(&(&v / norm));
    }
    q
}

// --- exact rational ridge oracle ---

fn to_rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite input")
}

/// Convert a rational to the nearest-ish f64 without overflowing through
/// the numerator/denominator.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    let negative = r.is_negative();
    let mut n = r.numer().abs();
    let mut d = r.denom().abs();
    let shift = 64i64 - (n.bits() as i64 - d.bits() as i64);
    if shift >= 0 {
        n <<= shift as usize;
    } else {
        d <<= (-shift) as usize;
    }
    let q: BigInt = n / d;
    let val = q.to_f64().expect("quotient has ~64 bits") * 2f64.powi(-(shift as i32));
    if negative {
        -val
    } else {
        val
    }
}

/// Solve `A X = B` exactly with pivoted Gaussian elimination on rationals.
fn solve_rational(
    mut a: Vec<Vec<BigRational>>,
    mut b: Vec<Vec<BigRational>>,
) -> Vec<Vec<BigRational>> {
    let n = a.len();
    let m = b[0].len();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[i][col].abs().cmp(&a[j][col].abs()))
            .expect("nonempty");
        assert!(!a[pivot_row][col].is_zero(), "singular system in oracle");
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in col + 1..n {
            if a[row][col].is_zero() {
                continue;
            }
            let factor = &a[row][col] / &a[col][col];
            for k in col..n {
                let t = &factor * &a[col][k];
                a[row][k] -= t;
            }
            for k in 0..m {
                let t = &factor * &b[col][k];
                b[row][k] -= t;
            }
        }
    }
    let mut x = vec![vec![BigRational::zero(); m]; n];
    for row in (0..n).rev() {
        for k in 0..m {
            let mut acc = b[row][k].clone();
            for col in row + 1..n {
                acc -= &a[row][col] * &x[col][k];
            }
            x[row][k] = acc / &a[row][row];
        }
    }
    x
}

/// Exact closed-form ridge solution `(XᵀX + nαI)⁻¹XᵀY`, computed in
/// rational arithmetic and rounded to f64 at the very end.
pub fn ridge_oracle(
    x: &ArrayView2<'_, f64>,
    y: &ArrayView2<'_, f64>,
    alpha: f64,
) -> Array2<f64> {
    let (n, d) = (x.nrows(), x.ncols());
    let k = y.ncols();
    let xr: Vec<Vec<BigRational>> = (0..n)
        .map(|i| (0..d).map(|j| to_rational(x[[i, j]])).collect())
        .collect();
    let yr: Vec<Vec<BigRational>> = (0..n)
        .map(|i| (0..k).map(|j| to_rational(y[[i, j]])).collect())
        .collect();

    let lambda = to_rational(n as f64) * to_rational(alpha);
    let mut lhs = vec![vec![BigRational::zero(); d]; d];
    for a in 0..d {
        for b in a..d {
            let mut acc = BigRational::zero();
            for i in 0..n {
                acc += &xr[i][a] * &xr[i][b];
            }
            lhs[a][b] = acc.clone();
            lhs[b][a] = acc;
        }
        lhs[a][a] += &lambda;
    }
    let mut rhs = vec![vec![BigRational::zero(); k]; d];
    for a in 0..d {
        for j in 0..k {
            let mut acc = BigRational::zero();
            for i in 0..n {
                acc += &xr[i][a] * &yr[i][j];
            }
            rhs[a][j] = acc;
        }
    }

    let sol = solve_rational(lhs, rhs);
    let mut out = Array2::zeros((d, k));
    for a in 0..d {
        for j in 0..k {
            out[[a, j]] = rational_to_f64(&sol[a][j]);
        }
    }
    out
}

// --- f64 Gaussian elimination (independent of the Cholesky path) ---

/// Solve `A X = B` with partial pivoting, plain f64.
pub fn gaussian_solve(a: &ArrayView2<'_, f64>, b: &ArrayView2<'_, f64>) -> Array2<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut aw = a.to_owned();
    let mut bw = b.to_owned();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| aw[[i, col]].abs().total_cmp(&aw[[j, col]].abs()))
            .unwrap();
        if pivot_row != col {
            for k in 0..n {
                aw.swap([col, k], [pivot_row, k]);
            }
            for k in 0..m {
                bw.swap([col, k], [pivot_row, k]);
            }
        }
        for row in col + 1..n {
            let factor = aw[[row, col]] / aw[[col, col]];
            for k in col..n {
                let t = factor * aw[[col, k]];
                aw[[row, k]] -= t;
            }
            for k in 0..m {
                let t = factor * bw[[col, k]];
                bw[[row, k]] -= t;
            }
        }
    }
    let mut x = Array2::<f64>::zeros((n, m));
    for row in (0..n).rev() {
        for k in 0..m {
            let mut acc = bw[[row, k]];
            for col in row + 1..n {
                acc -= aw[[row, col]] * x[[col, k]];
            }
            x[[row, k]] = acc / aw[[row, row]];
        }
    }
    x
}

/// Mean out-of-fold squared error per alpha, re-derived by direct
/// enumeration (no standardization, Gaussian elimination solver).
pub fn cv_mse_by_enumeration(
    x: &ArrayView2<'_, f64>,
    y: &ArrayView2<'_, f64>,
    alphas: &[f64],
    folds: &[Vec<usize>],
) -> Vec<f64> {
    use ndarray::Axis;
    let n = x.nrows();
    let mut sq = vec![0.0f64; alphas.len()];
    let mut cells = 0usize;
    for held in folds {
        let held_set: std::collections::HashSet<usize> = held.iter().copied().collect();
        let train: Vec<usize> = (0..n).filter(|i| !held_set.contains(i)).collect();
        let xt = x.select(Axis(0), &train);
        let yt = y.select(Axis(0), &train);
        let xh = x.select(Axis(0), held);
        let yh = y.select(Axis(0), held);
        let xtx = xt.t().dot(&xt);
        let xty = xt.t().dot(&yt);
        for (ai, alpha) in alphas.iter().enumerate() {
            let mut lhs = xtx.clone();
            let lambda = train.len() as f64 * alpha;
            for i in 0..lhs.nrows() {
                lhs[[i, i]] += lambda;
            }
            let theta = gaussian_solve(&lhs.view(), &xty.view());
            let pred = xh.dot(&theta);
            for (p, t) in pred.iter().zip(yh.iter()) {
                let d = p - t;
                sq[ai] += d * d;
            }
        }
        cells += held.len() * y.ncols();
    }
    sq.into_iter().map(|s| s / cells as f64).collect()
}

/// Relative Frobenius residual of the unregularized least-squares fit of
/// `y` on `x` (requires full-rank `x`).
pub fn least_squares_relative_residual(
    x: &ArrayView2<'_, f64>,
    y: &ArrayView2<'_, f64>,
) -> f64 {
    let xtx = x.t().dot(x);
    let xty = x.t().dot(y);
    let theta = gaussian_solve(&xtx.view(), &xty.view());
    let resid = &x.dot(&theta) - y;
    let num: f64 = resid.iter().map(|v| v * v).sum::<f64>().sqrt();
    let den: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    num / den
}

// --- rank oracle ---

fn cosine_distance_naive(u: &ArrayView1<'_, f64>, v: &ArrayView1<'_, f64>) -> f64 {
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v.iter()) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    1.0 - dot / (nu.sqrt() * nv.sqrt())
}

/// Sort-based mid-rank of the true candidate: sort all distances, average
/// the 0-based positions of the tie group containing the true candidate.
pub fn brute_force_rank(
    prediction: &ArrayView1<'_, f64>,
    candidates: &ArrayView2<'_, f64>,
    true_index: usize,
) -> f64 {
    let dists: Vec<f64> = candidates
        .rows()
        .into_iter()
        .map(|c| cosine_distance_naive(prediction, &c))
        .collect();
    let d_true = dists[true_index];
    let mut sorted = dists.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let lo = sorted.partition_point(|d| *d < d_true);
    let hi = sorted.partition_point(|d| *d <= d_true);
    // average of positions lo..hi-1
    (lo + hi - 1) as f64 / 2.0
}

// --- misc numeric helpers ---

/// Largest squared singular value, by power iteration on XᵀX.
pub fn spectral_norm_sq(x: &ArrayView2<'_, f64>) -> f64 {
    let xtx = x.t().dot(x);
    let d = xtx.nrows();
    let mut v = Array1::from_elem(d, 1.0 / (d as f64).sqrt());
    for _ in 0..100 {
        let w = xtx.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
    }
    v.dot(&xtx.dot(&v))
}

/// Pearson correlation of two equally-long vectors.
pub fn pearson(a: &ArrayView1<'_, f64>, b: &ArrayView1<'_, f64>) -> f64 {
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cov / (va.sqrt() * vb.sqrt())
}
