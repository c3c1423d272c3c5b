//! Truncated Taylor expansion of the mode-moment function of `A_p^beta`.
//!
//! `g(A) = sum_k a_k (A - alpha I)^k` needs only tridiagonal products, so the
//! `K`-term truncation is banded with half-width `K`. Entries outside the band
//! are exact zeros and the ones inside converge geometrically.

use super::ThermalSpectral;
use crate::chain_model::{DisorderedChain, Profiles, TridiagSym};
use crate::error::{ChainError, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::f64::consts::PI;

/// Points on the contour used for the coefficients.
const CONTOUR_POINTS: usize = 1024;

/// Distance from the expansion centre to the nearest pole of `g` at `-4 pi^2`.
pub fn convergence_radius(alpha: f64) -> f64 {
    alpha + 4.0 * PI * PI
}

fn g_complex(z: Complex64) -> Complex64 {
    let s = z.sqrt() * 0.5;
    if s.norm() < 1e-6 {
        return Complex64::new(1.0, 0.0) + z / 12.0;
    }
    s / s.tanh()
}

/// Taylor coefficients `a_0..=a_k` of `g(z) = (sqrt(z)/2) coth(sqrt(z)/2)` at `alpha`,
/// from a trapezoid rule on the circle of radius `alpha + 2 pi^2`.
pub fn taylor_coefficients(alpha: f64, k: usize) -> Vec<f64> {
    let rho = alpha + 2.0 * PI * PI;
    let m = CONTOUR_POINTS.max(4 * (k + 1));
    let vals: Vec<Complex64> = (0..m)
        .map(|j| {
            let th = 2.0 * PI * j as f64 / m as f64;
            g_complex(Complex64::new(alpha, 0.0) + Complex64::from_polar(rho, th))
        })
        .collect();
    (0..=k)
        .map(|order| {
            let s: Complex64 = vals
                .iter()
                .enumerate()
                .map(|(j, v)| v * Complex64::from_polar(1.0, -2.0 * PI * (order * j % m) as f64 / m as f64))
                .sum();
            s.re / m as f64 / rho.powi(order as i32)
        })
        .collect()
}

/// Dense `sum_{k <= K} a_k (A - alpha I)^k` by Horner on columns.
pub fn taylor_matrix(a: &TridiagSym, alpha: f64, coeffs: &[f64]) -> DMatrix<f64> {
    let n = a.dim();
    let mut out = DMatrix::zeros(n, n);
    let mut s = vec![0.0; n];
    let mut buf = vec![0.0; n];
    let kmax = coeffs.len() - 1;
    for y in 0..n {
        s.iter_mut().for_each(|v| *v = 0.0);
        s[y] = coeffs[kmax];
        for k in (0..kmax).rev() {
            a.matvec(&s, &mut buf);
            // Only the band |x - y| <= kmax - k can be non-zero.
            let w = kmax - k;
            let lo = y.saturating_sub(w);
            let hi = (y + w + 1).min(n);
            for x in lo..hi {
                s[x] = buf[x] - alpha * s[x];
            }
            s[y] += coeffs[k];
        }
        out.column_mut(y).copy_from_slice(&s);
    }
    out
}

#[derive(Clone, Debug)]
pub struct TaylorApprox {
    pub terms: usize,
    pub alpha: f64,
    pub c0: f64,
    pub coefficients: Vec<f64>,
    /// `D_p (sum a_k (A - alpha)^k) D_p`.
    pub c_pp: DMatrix<f64>,
    /// Max entrywise gap to the spectral evaluation inside `|x - y| < K`.
    pub band_gap: f64,
    /// Max magnitude of the truncation outside `|x - y| <= K`; 0 by construction.
    pub outside_band: f64,
    /// Geometric tail factor `q^{K+1} / (1 - q)` with `q = max|lambda - alpha| / R`.
    pub tail_ratio: f64,
}

/// `K`-term Taylor evaluation of the momentum covariance, compared against
/// the spectral sum (zero mode included).
pub fn taylor_covariance(
    thermal: &ThermalSpectral,
    chain: &DisorderedChain,
    profiles: &Profiles,
    terms: usize,
) -> Result<TaylorApprox> {
    let n = thermal.n();
    if chain.n != n {
        return Err(ChainError::DimensionMismatch {
            what: "thermal spectrum",
            expected: chain.n,
            got: n,
        });
    }
    let c0 = ThermalSpectral::norm_bound(chain, profiles);
    let alpha = (c0 + 1.0) / 2.0;
    let coefficients = taylor_coefficients(alpha, terms);
    let t = taylor_matrix(&thermal.a_p_beta, alpha, &coefficients);
    let d = thermal.d_p();
    let mut c_pp = t;
    for x in 0..n {
        for y in 0..n {
            c_pp[(x, y)] *= d[x] * d[y];
        }
    }
    let exact = super::quantum_covariance(thermal, chain)?.c_pp;
    let mut band_gap = 0.0f64;
    let mut outside_band = 0.0f64;
    for x in 0..n {
        for y in 0..n {
            let dist = x.abs_diff(y);
            if dist < terms.max(1) {
                band_gap = band_gap.max((c_pp[(x, y)] - exact[(x, y)]).abs());
            } else if dist > terms {
                outside_band = outside_band.max(c_pp[(x, y)].abs());
            }
        }
    }
    let r = alpha.max(c0 - alpha);
    let q = r / convergence_radius(alpha);
    Ok(TaylorApprox {
        terms,
        alpha,
        c0,
        coefficients,
        c_pp,
        band_gap,
        outside_band,
        tail_ratio: q.powi(terms as i32 + 1) / (1.0 - q),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain_model::{sample_masses, sample_profiles, MassLaw, ProfilePreset};
    use crate::quantum_state::{build_thermal, mode_moment};

    #[test]
    fn coefficients_match_real_derivatives() {
        // Finite differences of g on the real axis as an oracle for a_0..a_2.
        let alpha = 2.5;
        let a = taylor_coefficients(alpha, 4);
        let h = 1e-3;
        let g = mode_moment;
        assert!((a[0] - g(alpha)).abs() < 1e-13);
        let d1 = (g(alpha + h) - g(alpha - h)) / (2.0 * h);
        let d2 = (g(alpha + h) - 2.0 * g(alpha) + g(alpha - h)) / (h * h);
        assert!((a[1] - d1).abs() < 1e-7);
        assert!((a[2] - d2 / 2.0).abs() < 1e-5);
        // Sum of the series at a nearby point.
        let z = 1.0;
        let full = taylor_coefficients(alpha, 60);
        let s: f64 = full.iter().enumerate().map(|(k, c)| c * (z - alpha).powi(k as i32)).sum();
        assert!((s - g(z)).abs() < 1e-13);
    }

    #[test]
    fn zeroth_order_is_diagonal() {
        let c = sample_masses(32, MassLaw::default(), 1).unwrap();
        let p = sample_profiles(&ProfilePreset::Equilibrium { beta: 1.0 }).unwrap();
        let th = build_thermal(&c, &p).unwrap();
        let t = taylor_covariance(&th, &c, &p, 0).unwrap();
        let a0 = mode_moment(t.alpha);
        for x in 0..32 {
            for y in 0..32 {
                let expect = if x == y { a0 * c.masses[x] } else { 0.0 };
                assert!((t.c_pp[(x, y)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn banded_and_accurate() {
        let n = 256;
        let c = sample_masses(n, MassLaw::default(), 2).unwrap();
        let p = sample_profiles(&ProfilePreset::Equilibrium { beta: 1.0 }).unwrap();
        let th = build_thermal(&c, &p).unwrap();
        let k = 64;
        let t = taylor_covariance(&th, &c, &p, k).unwrap();
        assert!(t.band_gap < 1e-8, "{}", t.band_gap);
        assert_eq!(t.outside_band, 0.0);
        assert_eq!(t.c_pp[(10, 10 + k + 3)], 0.0);
    }

    #[test]
    fn short_expansion_is_exactly_banded() {
        let n = 40;
        let c = sample_masses(n, MassLaw::default(), 3).unwrap();
        let p = sample_profiles(&ProfilePreset::LinearTemperature { beta_left: 0.5, beta_right: 1.0 }).unwrap();
        let th = build_thermal(&c, &p).unwrap();
        let t = taylor_covariance(&th, &c, &p, 5).unwrap();
        for x in 0..n {
            for y in 0..n {
                if x.abs_diff(y) > 5 {
                    assert_eq!(t.c_pp[(x, y)], 0.0);
                }
            }
        }
        assert!(t.c_pp[(0, 5)] != 0.0);
    }
}
