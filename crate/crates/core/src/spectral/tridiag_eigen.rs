//! Implicit-shift QL iteration for symmetric tridiagonal matrices.

use crate::chain_model::TridiagSym;
use crate::error::{ChainError, Result};
use nalgebra::DMatrix;

/// Iteration cap per eigenvalue.
pub const MAX_QL_ITERATIONS: usize = 60;

/// Eigenvalues below this magnitude that come out negative are clamped to 0.
pub const CLAMP_TOL: f64 = 1e-12;

/// Pairs of neighbouring eigenvalues closer than this are reported as degenerate.
pub const DEGENERACY_GAP: f64 = 1e-13;

#[derive(Clone, Debug)]
pub struct TridiagEigen {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector of `values[k]`, with its largest-magnitude entry positive.
    pub vectors: DMatrix<f64>,
    /// Indices `k` with `values[k+1] - values[k] < DEGENERACY_GAP`.
    pub near_degenerate: Vec<usize>,
}

pub fn eig_sym_tridiag(a: &TridiagSym) -> Result<TridiagEigen> {
    let n = a.dim();
    if n < 2 {
        return Err(ChainError::InvalidSize(n));
    }
    let mut d = a.diag.clone();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(&a.offdiag);
    let mut v = DMatrix::<f64>::identity(n, n);

    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_QL_ITERATIONS {
                    return Err(ChainError::NoConvergence {
                        mode: l,
                        iterations: MAX_QL_ITERATIONS,
                    });
                }
                // Wilkinson-type shift from the leading 2x2 block.
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    rotate_columns(&mut v, i, c, s);
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let values: Vec<f64> = order
        .iter()
        .map(|&i| {
            let x = d[i];
            if x < 0.0 && x > -CLAMP_TOL {
                0.0
            } else {
                x
            }
        })
        .collect();
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.column_mut(k).copy_from(&v.column(i));
    }
    normalize_signs(&mut vectors);
    let near_degenerate: Vec<usize> = (0..n - 1)
        .filter(|&k| values[k + 1] - values[k] < DEGENERACY_GAP)
        .collect();
    if !near_degenerate.is_empty() {
        log::warn!(
            "{} near-degenerate eigenvalue pairs (gap < {DEGENERACY_GAP:e}), first at index {}",
            near_degenerate.len(),
            near_degenerate[0]
        );
    }
    Ok(TridiagEigen {
        values,
        vectors,
        near_degenerate,
    })
}

/// Applies the Givens rotation to columns `i` and `i + 1`, which are contiguous
/// in column-major storage.
#[inline]
fn rotate_columns(v: &mut DMatrix<f64>, i: usize, c: f64, s: f64) {
    let n = v.nrows();
    let data = v.as_mut_slice();
    let (left, right) = data[i * n..(i + 2) * n].split_at_mut(n);
    for (a, b) in left.iter_mut().zip(right.iter_mut()) {
        let h = *b;
        *b = s * *a + c * h;
        *a = c * *a - s * h;
    }
}

/// Makes the largest-magnitude entry of each column positive.
pub fn normalize_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for &x in col.iter() {
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        if sign < 0.0 {
            col.neg_mut();
        }
    }
}
