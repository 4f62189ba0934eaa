//! Dense symmetric positive-definite solves.
//!
//! Small, allocation-light Cholesky routines used by the ridge solver.
//! Everything here is sequential and loop-order-fixed, so results are
//! bit-identical across runs and worker counts.

use ndarray::{Array2, ArrayView2};

/// Lower-triangular Cholesky factor of a symmetric matrix, or `None` if a
/// pivot is not strictly positive (the matrix is not positive definite).
pub fn cholesky_factor(a: &ArrayView2<'_, f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "cholesky_factor needs a square matrix");
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..i {
            let (head, tail) = l.split_at_mut(i * n);
            let row_j = &head[j * n..j * n + j];
            let row_i = &tail[..j];
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= row_i[k] * row_j[k];
            }
            tail[j] = sum / head[j * n + j];
        }
        let row_i = &l[i * n..i * n + i];
        let mut d = a[[i, i]];
        for v in row_i {
            d -= v * v;
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        l[i * n + i] = d.sqrt();
    }
    Some(Array2::from_shape_vec((n, n), l).expect("square buffer"))
}

/// Solve `L Lᵀ X = B` given the lower factor `L`; `B` is `n×m`.
pub fn solve_with_factor(l: &Array2<f64>, b: &ArrayView2<'_, f64>) -> Array2<f64> {
    let n = l.nrows();
    let m = b.ncols();
    assert_eq!(b.nrows(), n, "right-hand side row count mismatch");
    let lv = l.as_slice().expect("factor is contiguous");
    let mut x = vec![0.0f64; n * m];
    for (i, brow) in b.rows().into_iter().enumerate() {
        for (j, v) in brow.iter().enumerate() {
            x[i * m + j] = *v;
        }
    }

    // Forward: L Z = B.
    for i in 0..n {
        for k in 0..i {
            let c = lv[i * n + k];
            let (zk, zi) = x.split_at_mut(i * m);
            let zk = &zk[k * m..k * m + m];
            let zi = &mut zi[..m];
            for j in 0..m {
                zi[j] -= c * zk[j];
            }
        }
        let d = lv[i * n + i];
        for v in &mut x[i * m..i * m + m] {
            *v /= d;
        }
    }

    // Backward: Lᵀ X = Z.
    for i in (0..n).rev() {
        for k in i + 1..n {
            let c = lv[k * n + i];
            let (zi, zk) = x.split_at_mut(k * m);
            let zi = &mut zi[i * m..i * m + m];
            let zk = &zk[..m];
            for j in 0..m {
                zi[j] -= c * zk[j];
            }
        }
        let d = lv[i * n + i];
        for v in &mut x[i * m..i * m + m] {
            *v /= d;
        }
    }

    Array2::from_shape_vec((n, m), x).expect("solution buffer")
}

/// Solve `A X = B` for symmetric positive-definite `A`.
pub fn solve_spd(a: &ArrayView2<'_, f64>, b: &ArrayView2<'_, f64>) -> Option<Array2<f64>> {
    cholesky_factor(a).map(|l| solve_with_factor(&l, b))
}
