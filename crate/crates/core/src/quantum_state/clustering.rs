//! Decay of the locally Gibbs two-point function and the pairing structure of
//! its higher moments.

use super::QuantumCovariance;
use crate::stats;
use num_complex::Complex64;

/// Ordered moment `<X_{i_1} ... X_{i_k}>` of centred quasi-free variables,
/// summed over pairings with the order of each pair kept.
pub fn ordered_moment<F: Fn(usize, usize) -> Complex64>(ops: &[usize], two_point: &F) -> Complex64 {
    if ops.is_empty() {
        return Complex64::new(1.0, 0.0);
    }
    if ops.len() % 2 == 1 {
        return Complex64::new(0.0, 0.0);
    }
    let first = ops[0];
    let mut total = Complex64::new(0.0, 0.0);
    for j in 1..ops.len() {
        let rest: Vec<usize> = ops[1..].iter().enumerate().filter(|(i, _)| *i + 1 != j).map(|(_, v)| *v).collect();
        total += two_point(first, ops[j]) * ordered_moment(&rest, two_point);
    }
    total
}

#[derive(Clone, Debug)]
pub struct ClusteringReport {
    pub n: usize,
    /// `exp(slope)` of the fit of `log mean_x |C_pp(x, x + d)|` against `d`.
    pub q_fit: f64,
    pub fit_r: f64,
    pub fit_points: usize,
    /// `sup_{x != y} |x - y|^2 |C_xy|` for the pp, rr, symmetric rp and commutator blocks.
    pub clause1_pp: f64,
    pub clause1_rr: f64,
    pub clause1_rp: f64,
    pub clause1_rp_imag: f64,
    /// Largest odd (third) moment found; zero by the pairing rule.
    pub odd_moment_max: f64,
    /// Largest gap between the pairing expansion of a truncated fourth moment
    /// and the sum of its two cross pairings.
    pub fourth_moment_defect: f64,
    /// `sup |x - y|^2 |<p_x p_x p_y p_y>_T|`, the fourth-moment clause.
    pub clause3_pp: f64,
}

impl ClusteringReport {
    pub fn clause1_max(&self) -> f64 {
        self.clause1_pp.max(self.clause1_rr).max(self.clause1_rp).max(self.clause1_rp_imag)
    }
}

fn sup_weighted(rows: usize, cols: usize, at: impl Fn(usize, usize) -> f64) -> f64 {
    let mut s = 0.0f64;
    for x in 0..rows {
        for y in 0..cols {
            let d = x.abs_diff(y) as f64;
            if d > 0.0 {
                s = s.max(d * d * at(x, y).abs());
            }
        }
    }
    s
}

/// Exponential-decay fit and polynomial clustering constants of a locally Gibbs covariance.
pub fn verify_clustering(q: &QuantumCovariance) -> ClusteringReport {
    let n = q.c_pp.nrows();
    // Distance profile of |C_pp|.
    let prof: Vec<f64> = (0..n)
        .map(|d| (0..n - d).map(|x| q.c_pp[(x, x + d)].abs()).sum::<f64>() / (n - d) as f64)
        .collect();
    // Stop once the profile hits the rounding floor of the dense evaluation.
    let floor = 1e-11 * prof[0];
    let mut ds = Vec::new();
    let mut ls = Vec::new();
    for (d, &v) in prof.iter().enumerate().skip(1) {
        if v <= floor {
            break;
        }
        ds.push(d as f64);
        ls.push(v.ln());
    }
    let (q_fit, fit_r) = match stats::linear_fit(&ds, &ls) {
        Some(f) => (f.slope.exp(), f.r),
        None => (f64::NAN, f64::NAN),
    };
    let clause1_pp = sup_weighted(n, n, |x, y| q.c_pp[(x, y)]);
    let clause1_rr = sup_weighted(n - 1, n - 1, |x, y| q.c_rr[(x, y)]);
    let clause1_rp = sup_weighted(n - 1, n, |x, y| q.c_rp[(x, y)]);
    let clause1_rp_imag = sup_weighted(n - 1, n, |x, y| q.c_rp_imag[(x, y)]);

    // Combined index: r_0..r_{n-2}, then p_0..p_{n-1}.
    let two_point = |i: usize, j: usize| -> Complex64 {
        let nr = n - 1;
        match (i < nr, j < nr) {
            (true, true) => Complex64::new(q.c_rr[(i, j)], 0.0),
            (false, false) => Complex64::new(q.c_pp[(i - nr, j - nr)], 0.0),
            (true, false) => Complex64::new(q.c_rp[(i, j - nr)], q.c_rp_imag[(i, j - nr)]),
            (false, true) => Complex64::new(q.c_rp[(j, i - nr)], -q.c_rp_imag[(j, i - nr)]),
        }
    };
    let p = |x: usize| n - 1 + x;
    let sites: Vec<usize> = (0..n).step_by((n / 16).max(1)).collect();
    let mut odd_moment_max = 0.0f64;
    let mut fourth_moment_defect = 0.0f64;
    let mut clause3_pp = 0.0f64;
    for &x in &sites {
        let near = (1..=3).map(|d| x + d).filter(|&y| y < n);
        let partners: Vec<usize> = sites.iter().copied().chain(near).collect();
        for &y in &partners {
            let r = x.min(n - 2);
            for ops in [[p(x), p(y), r], [r, p(x), p(y)], [p(x), p(x), p(y)]] {
                odd_moment_max = odd_moment_max.max(ordered_moment(&ops, &two_point).norm());
            }
            if x == y {
                continue;
            }
            let full = ordered_moment(&[p(x), p(x), p(y), p(y)], &two_point);
            let trunc = full - two_point(p(x), p(x)) * two_point(p(y), p(y));
            let cross = two_point(p(x), p(y)) * two_point(p(x), p(y)) * 2.0;
            fourth_moment_defect = fourth_moment_defect.max((trunc - cross).norm());
            let d = x.abs_diff(y) as f64;
            clause3_pp = clause3_pp.max(d * d * trunc.norm());
        }
    }
    ClusteringReport {
        n,
        q_fit,
        fit_r,
        fit_points: ds.len(),
        clause1_pp,
        clause1_rr,
        clause1_rp,
        clause1_rp_imag,
        odd_moment_max,
        fourth_moment_defect,
        clause3_pp,
    }
}
