//! Quantum locally Gibbs (quasi-free) state of the chain.
//!
//! With `P = M_beta^{-1/2} p` and `Q = M_beta^{1/2} q`, `M_beta = diag(m / beta)`,
//! the locally Gibbs weight is the unit-temperature Gibbs state of
//! `|P|^2 / 2 + Q^T A_p^beta Q / 2`. Every normal mode of `A_p^beta` is a
//! thermal oscillator, so the state is fixed by its two-point function.

mod clustering;
mod taylor;
mod thermal_profile;

pub use clustering::{ordered_moment, verify_clustering, ClusteringReport};
pub use taylor::{taylor_coefficients, taylor_covariance, taylor_matrix, TaylorApprox};
pub use thermal_profile::{thermal_energy_profile, ThermalProfile};

use crate::chain_model::{grad_minus, grad_plus, DisorderedChain, Profiles, TridiagSym};
use crate::classical_state::{Blocks, Flavor, GaussianChainState};
use crate::error::{ChainError, Result};
use crate::spectral::{self, eig_sym_tridiag, Checks, ORTHONORMALITY_TOL, RESIDUAL_TOL, R_RESIDUAL_TOL};
use nalgebra::DMatrix;

/// `f(z) = sqrt(z) coth(sqrt(z))`, `f(0) = 1`.
pub fn f_spec(z: f64) -> Result<f64> {
    if !(z >= 0.0) {
        return Err(ChainError::InvalidParameter(format!("f_spec needs z >= 0, got {z}")));
    }
    if z < 1e-4 {
        return Ok(1.0 + z / 3.0 - z * z / 45.0);
    }
    let s = z.sqrt();
    Ok(s / s.tanh())
}

/// Second moment of a unit-temperature mode with squared frequency `z`:
/// `(gamma / 2) coth(gamma / 2) = f(z / 4)`.
pub fn mode_moment(z: f64) -> f64 {
    f_spec(z.max(0.0) / 4.0).expect("clamped argument")
}

/// Normal modes of the thermal matrix `A_p^beta`.
#[derive(Clone, Debug)]
pub struct ThermalSpectral {
    pub a_p_beta: TridiagSym,
    /// Ascending, `gamma[0] = 0`.
    pub gamma: Vec<f64>,
    /// Column `k` is `psi^k`.
    pub psi: DMatrix<f64>,
    /// Column `k - 1` is `psi~^k = (beta_bond)^{1/2} grad_+ M_beta^{-1/2} psi^k / gamma_k`.
    pub psi_r: DMatrix<f64>,
    /// `m_x / beta_x`.
    pub m_beta: Vec<f64>,
    pub beta_site: Vec<f64>,
    /// `beta` on bond `x` (between sites `x` and `x + 1`), equal to the left site value.
    pub beta_bond: Vec<f64>,
    pub near_degenerate: Vec<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ThermalDiagnostics {
    pub orthonormality_p: f64,
    pub orthonormality_r: f64,
    pub residual_p: f64,
    pub residual_r: f64,
}

/// `A_p^beta = M_beta^{-1/2} (-grad_- beta_bond grad_+) M_beta^{-1/2}`.
pub fn thermal_matrix(chain: &DisorderedChain, profiles: &Profiles) -> (TridiagSym, Vec<f64>, Vec<f64>) {
    let n = chain.n;
    let m = &chain.masses;
    let beta_site: Vec<f64> = (1..=n).map(|x| profiles.beta(x as f64 / n as f64)).collect();
    let beta_bond: Vec<f64> = beta_site[..n - 1].to_vec();
    let bond = |x: isize| {
        if x < 0 || x as usize >= n - 1 {
            0.0
        } else {
            beta_bond[x as usize]
        }
    };
    let diag = (0..n)
        .map(|x| (bond(x as isize) + bond(x as isize - 1)) * beta_site[x] / m[x])
        .collect();
    let offdiag = (0..n - 1)
        .map(|x| -beta_bond[x] * (beta_site[x] * beta_site[x + 1] / (m[x] * m[x + 1])).sqrt())
        .collect();
    (TridiagSym { diag, offdiag }, beta_site, beta_bond)
}

pub fn build_thermal(chain: &DisorderedChain, profiles: &Profiles) -> Result<ThermalSpectral> {
    build_thermal_with(chain, profiles, Checks::Full)
}

pub fn build_thermal_with(chain: &DisorderedChain, profiles: &Profiles, checks: Checks) -> Result<ThermalSpectral> {
    let (a, beta_site, beta_bond) = thermal_matrix(chain, profiles);
    let m_beta: Vec<f64> = chain.masses.iter().zip(&beta_site).map(|(m, b)| m / b).collect();
    let total: f64 = m_beta.iter().sum();
    let ground: Vec<f64> = m_beta.iter().map(|v| (v / total).sqrt()).collect();
    let eig = eig_sym_tridiag(&a)?;
    let base = spectral::assemble(&eig, &m_beta, &ground)?;
    let mut psi_r = base.phi_r;
    for (x, b) in beta_bond.iter().enumerate() {
        psi_r.row_mut(x).scale_mut(b.sqrt());
    }
    let th = ThermalSpectral {
        a_p_beta: a,
        gamma: base.omega,
        psi: base.phi_p,
        psi_r,
        m_beta,
        beta_site,
        beta_bond,
        near_degenerate: base.near_degenerate,
    };
    match checks {
        Checks::None => {}
        Checks::Fast => th.enforce(&th.diagnostics(false), false)?,
        Checks::Full => th.enforce(&th.diagnostics(true), true)?,
    }
    Ok(th)
}

fn max_dev_from_identity(g: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

impl ThermalSpectral {
    pub fn n(&self) -> usize {
        self.gamma.len()
    }

    /// `A_r^beta v = B grad_+ M_beta^{-1} grad_+^T B v` with `B = diag(beta_bond)^{1/2}`.
    pub fn apply_ar(&self, v: &[f64]) -> Vec<f64> {
        let w: Vec<f64> = v.iter().zip(&self.beta_bond).map(|(v, b)| v * b.sqrt()).collect();
        let u: Vec<f64> = grad_minus(&w).iter().zip(&self.m_beta).map(|(g, m)| -g / m).collect();
        grad_plus(&u).iter().zip(&self.beta_bond).map(|(g, b)| g * b.sqrt()).collect()
    }

    pub fn diagnostics(&self, orthonormality: bool) -> ThermalDiagnostics {
        let n = self.n();
        let norm = self.a_p_beta.gershgorin_bound();
        let mut d = ThermalDiagnostics::default();
        if orthonormality {
            d.orthonormality_p = max_dev_from_identity(&self.psi.tr_mul(&self.psi));
            d.orthonormality_r = max_dev_from_identity(&self.psi_r.tr_mul(&self.psi_r));
        }
        let resid = |av: &[f64], v: &[f64], w2: f64| {
            av.iter().zip(v).map(|(a, v)| (a - w2 * v).powi(2)).sum::<f64>().sqrt() / norm
        };
        for k in 0..n {
            let col = self.psi.column(k);
            let av = self.a_p_beta.apply(col.as_slice());
            d.residual_p = d.residual_p.max(resid(&av, col.as_slice(), self.gamma[k].powi(2)));
        }
        for k in 1..n {
            let col = self.psi_r.column(k - 1);
            let av = self.apply_ar(col.as_slice());
            d.residual_r = d.residual_r.max(resid(&av, col.as_slice(), self.gamma[k].powi(2)));
        }
        d
    }

    fn enforce(&self, d: &ThermalDiagnostics, orthonormality: bool) -> Result<()> {
        if orthonormality && (d.orthonormality_p > ORTHONORMALITY_TOL || d.orthonormality_r > ORTHONORMALITY_TOL) {
            return Err(ChainError::SpectralCheck(format!(
                "thermal orthonormality {:.3e} / {:.3e}",
                d.orthonormality_p, d.orthonormality_r
            )));
        }
        if d.residual_p > RESIDUAL_TOL || d.residual_r > R_RESIDUAL_TOL {
            return Err(ChainError::SpectralCheck(format!(
                "thermal residual {:.3e} / {:.3e}",
                d.residual_p, d.residual_r
            )));
        }
        Ok(())
    }

    /// `(gamma_k / 2) coth(gamma_k / 2)` for every mode, 1 for the zero mode.
    pub fn mode_moments(&self) -> Vec<f64> {
        self.gamma.iter().map(|g| mode_moment(g * g)).collect()
    }

    /// `D_p = diag(sqrt(m / beta))`.
    pub fn d_p(&self) -> Vec<f64> {
        self.m_beta.iter().map(|v| v.sqrt()).collect()
    }

    /// `D_r = diag(beta_bond^{-1/2})`.
    pub fn d_r(&self) -> Vec<f64> {
        self.beta_bond.iter().map(|b| 1.0 / b.sqrt()).collect()
    }

    /// Norm bound `4 beta_+^2 / m_-` from Gershgorin on the thermal matrix.
    pub fn norm_bound(chain: &DisorderedChain, profiles: &Profiles) -> f64 {
        4.0 * profiles.beta_plus().powi(2) / chain.m_minus()
    }

    /// `4 beta_+ / m_-`, valid as a bound when `beta_+ <= 1`.
    pub fn linear_norm_bound(chain: &DisorderedChain, profiles: &Profiles) -> f64 {
        4.0 * profiles.beta_plus() / chain.m_minus()
    }

    /// Largest eigenvalue, i.e. `||A_p^beta||_2`.
    pub fn operator_norm(&self) -> f64 {
        self.gamma.last().map(|g| g * g).unwrap_or(0.0)
    }
}

/// Exact two-point function of the quantum locally Gibbs state at `t = 0`.
///
/// `c_pp` includes the zero mode with weight `f(0) = 1`; `zero_mode` is its
/// column `D_p psi^0`, so that `c_pp - u u^T` is the sum over `k >= 1`.
#[derive(Clone, Debug)]
pub struct QuantumCovariance {
    pub c_pp: DMatrix<f64>,
    pub c_rr: DMatrix<f64>,
    /// Symmetric part of `<r p>`; zero for the locally Gibbs state.
    pub c_rp: DMatrix<f64>,
    /// `A_rp[x, y] = (delta_{y, x+1} - delta_{x, y}) / 2` from the commutator.
    pub c_rp_imag: DMatrix<f64>,
    /// `(C_pp,xx / m_x + C_rr,xx) / 2` with `C_rr,nn = 0`.
    pub b_profile: Vec<f64>,
    pub zero_mode: Vec<f64>,
}

/// Imaginary part of `<r_x p_y>` fixed by `[q_x, p_y] = i delta_xy`.
pub fn ccr_imag(n: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n - 1, n);
    for x in 0..n - 1 {
        a[(x, x)] = -0.5;
        a[(x, x + 1)] = 0.5;
    }
    a
}

/// `D (sum_k w_k v_k v_k^T) D` for the columns `v_k` of `basis`.
fn weighted_gram(basis: &DMatrix<f64>, weights: &[f64], d: &[f64]) -> DMatrix<f64> {
    let mut scaled = basis.clone();
    for (k, w) in weights.iter().enumerate() {
        scaled.column_mut(k).scale_mut(w.sqrt());
    }
    for (x, s) in d.iter().enumerate() {
        scaled.row_mut(x).scale_mut(*s);
    }
    &scaled * scaled.transpose()
}

pub fn quantum_covariance(thermal: &ThermalSpectral, chain: &DisorderedChain) -> Result<QuantumCovariance> {
    let n = thermal.n();
    if chain.n != n {
        return Err(ChainError::DimensionMismatch {
            what: "thermal spectrum",
            expected: chain.n,
            got: n,
        });
    }
    let g = thermal.mode_moments();
    let d_p = thermal.d_p();
    let d_r = thermal.d_r();
    let c_pp = weighted_gram(&thermal.psi, &g, &d_p);
    let c_rr = weighted_gram(&thermal.psi_r, &g[1..], &d_r);
    let zero_mode: Vec<f64> = (0..n).map(|x| d_p[x] * thermal.psi[(x, 0)]).collect();
    let b_profile = (0..n)
        .map(|x| {
            let pot = if x < n - 1 { c_rr[(x, x)] } else { 0.0 };
            0.5 * (c_pp[(x, x)] / chain.masses[x] + pot)
        })
        .collect();
    Ok(QuantumCovariance {
        c_pp,
        c_rr,
        c_rp: DMatrix::zeros(n - 1, n),
        c_rp_imag: ccr_imag(n),
        b_profile,
        zero_mode,
    })
}

/// `b_x` from the diagonals alone, in `O(n^2)`.
pub fn b_profile_from_modes(thermal: &ThermalSpectral, chain: &DisorderedChain) -> Vec<f64> {
    let n = thermal.n();
    let g = thermal.mode_moments();
    (0..n)
        .map(|x| {
            let kin: f64 = (0..n).map(|k| g[k] * thermal.psi[(x, k)].powi(2)).sum::<f64>() * thermal.m_beta[x]
                / chain.masses[x];
            let pot = if x < n - 1 {
                (1..n).map(|k| g[k] * thermal.psi_r[(x, k - 1)].powi(2)).sum::<f64>() / thermal.beta_bond[x]
            } else {
                0.0
            };
            0.5 * (kin + pot)
        })
        .collect()
}

/// The locally Gibbs state together with the bookkeeping of its means.
#[derive(Clone, Debug)]
pub struct QuantumLocalGibbs {
    pub state: GaussianChainState,
    pub b_profile: Vec<f64>,
    /// `sum_x mean_p,x / sum_x m_x` of the profile means, removed from `mean_p`.
    pub epsilon: f64,
}

/// Means `r_bar(x/n)` and `p_bar(x/n) m_x / m_bar - epsilon m_x`, plus the exact covariance.
pub fn quantum_locally_gibbs(chain: &DisorderedChain, profiles: &Profiles) -> Result<QuantumLocalGibbs> {
    quantum_locally_gibbs_with(chain, profiles, Checks::Full)
}

pub fn quantum_locally_gibbs_with(
    chain: &DisorderedChain,
    profiles: &Profiles,
    checks: Checks,
) -> Result<QuantumLocalGibbs> {
    profiles.check_quantum()?;
    let thermal = build_thermal_with(chain, profiles, checks)?;
    let cov = quantum_covariance(&thermal, chain)?;
    let n = chain.n;
    let y = |x: usize| x as f64 / n as f64;
    let mean_r: Vec<f64> = (1..n).map(|x| profiles.r_bar(y(x))).collect();
    let raw: Vec<f64> = (1..=n)
        .map(|x| profiles.p_bar(y(x)) * chain.masses[x - 1] / chain.mean_mass)
        .collect();
    let epsilon = raw.iter().sum::<f64>() / chain.total_mass();
    let mean_p = raw.iter().zip(&chain.masses).map(|(p, m)| p - epsilon * m).collect();
    let state = GaussianChainState {
        mean_r,
        mean_p,
        sym: Blocks {
            rr: cov.c_rr,
            pp: cov.c_pp,
            rp: cov.c_rp,
        },
        imag: Some(Blocks {
            rr: DMatrix::zeros(n - 1, n - 1),
            pp: DMatrix::zeros(n, n),
            rp: cov.c_rp_imag,
        }),
        flavor: Flavor::QuantumQuasiFree,
    };
    Ok(QuantumLocalGibbs {
        state,
        b_profile: cov.b_profile,
        epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain_model::{sample_masses, sample_profiles, MassLaw, ProfilePreset};
    use crate::dynamics::{evolve_covariance, EvolutionMap};
    use crate::spectral::build_spectral;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn unit() -> Profiles {
        sample_profiles(&ProfilePreset::Equilibrium { beta: 1.0 }).unwrap()
    }

    fn bump() -> Profiles {
        sample_profiles(&ProfilePreset::GaussianBump { beta: 0.8, amplitude: 0.5, center: 0.3, width: 0.15 }).unwrap()
    }

    #[test]
    fn f_spec_values() {
        assert_eq!(f_spec(0.0).unwrap(), 1.0);
        let v = f_spec(100.0).unwrap();
        let expect = 10.0 * (1.0 / 10.0f64.tanh());
        assert!((v - expect).abs() < 1e-12);
        assert!((v - 10.000000041).abs() < 1e-9);
        assert!(f_spec(-1e-3).is_err());
        // The series and the closed form meet at the switch point.
        let z: f64 = 1e-4;
        let closed = z.sqrt() / z.sqrt().tanh();
        assert!((f_spec(z * (1.0 - 1e-12)).unwrap() - closed).abs() < 1e-13);
    }

    proptest! {
        #[test]
        fn f_spec_is_monotone_and_above_one(a in 0.0f64..50.0, b in 0.0f64..50.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (fl, fh) = (f_spec(lo).unwrap(), f_spec(hi).unwrap());
            prop_assert!(fl >= 1.0);
            prop_assert!(fh >= fl - 1e-15);
        }

        #[test]
        fn thermal_norm_within_gershgorin_bound(seed in any::<u64>()) {
            let c = sample_masses(64, MassLaw::default(), seed).unwrap();
            let p = bump();
            let (a, _, _) = thermal_matrix(&c, &p);
            prop_assert!(a.gershgorin_bound() <= ThermalSpectral::norm_bound(&c, &p) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn unit_beta_reduces_to_dynamical_matrix() {
        let c = sample_masses(96, MassLaw::default(), 7).unwrap();
        let th = build_thermal(&c, &unit()).unwrap();
        let s = build_spectral(&c).unwrap();
        let ap = crate::chain_model::build_ap(&c);
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-15);
        assert!(close(&th.a_p_beta.diag, &ap.diag) && close(&th.a_p_beta.offdiag, &ap.offdiag));
        for k in 0..96 {
            assert!((th.gamma[k] - s.omega[k]).abs() < 1e-12);
        }
        assert!((th.psi.clone() - s.phi_p.clone()).amax() < 1e-9);
    }

    #[test]
    fn ground_mode_is_kernel() {
        let c = sample_masses(80, MassLaw::default(), 3).unwrap();
        let p = bump();
        let th = build_thermal(&c, &p).unwrap();
        assert_eq!(th.gamma[0], 0.0);
        let total: f64 = th.m_beta.iter().sum();
        let v: Vec<f64> = th.m_beta.iter().map(|m| (m / total).sqrt()).collect();
        let av = th.a_p_beta.apply(&v);
        assert!(av.iter().all(|x| x.abs() < 1e-14));
        for x in 0..80 {
            assert!((th.psi[(x, 0)] - v[x]).abs() < 1e-15);
        }
    }

    #[test]
    fn mode_space_moments() {
        let c = sample_masses(128, MassLaw::default(), 11).unwrap();
        let th = build_thermal(&c, &bump()).unwrap();
        let q = quantum_covariance(&th, &c).unwrap();
        let g = th.mode_moments();
        let (d_p, d_r) = (th.d_p(), th.d_r());
        let mut cpp = q.c_pp.clone();
        for x in 0..128 {
            for y in 0..128 {
                cpp[(x, y)] /= d_p[x] * d_p[y];
            }
        }
        let mp = th.psi.transpose() * cpp * &th.psi;
        let mut crr = q.c_rr.clone();
        for x in 0..127 {
            for y in 0..127 {
                crr[(x, y)] /= d_r[x] * d_r[y];
            }
        }
        let mr = th.psi_r.transpose() * crr * &th.psi_r;
        for k in 0..128 {
            for l in 0..128 {
                let target = if k == l { g[k] } else { 0.0 };
                assert!((mp[(k, l)] - target).abs() < 1e-10);
                if k > 0 && l > 0 {
                    assert!((mr[(k - 1, l - 1)] - target).abs() < 1e-10);
                }
            }
        }
        assert!(g[1..].iter().all(|&v| v >= 1.0));
    }

    #[test]
    fn fast_b_profile_matches_dense() {
        let c = sample_masses(64, MassLaw::default(), 2).unwrap();
        let th = build_thermal(&c, &bump()).unwrap();
        let q = quantum_covariance(&th, &c).unwrap();
        let fast = b_profile_from_modes(&th, &c);
        for x in 0..64 {
            assert!((fast[x] - q.b_profile[x]).abs() < 1e-12);
        }
    }

    #[test]
    fn site_variances_exceed_classical() {
        let c = sample_masses(64, MassLaw::default(), 5).unwrap();
        let p = bump();
        let th = build_thermal(&c, &p).unwrap();
        let q = quantum_covariance(&th, &c).unwrap();
        for x in 0..64 {
            let b = th.beta_site[x];
            assert!(q.c_pp[(x, x)] >= c.masses[x] / b * (1.0 - 1e-12));
            assert!(q.b_profile[x] >= 0.5 / b);
            if x < 63 {
                assert!(q.b_profile[x] >= 1.0 / b * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn high_temperature_is_classical() {
        let c = sample_masses(64, MassLaw::default(), 8).unwrap();
        let eps = 1e-3;
        let p = sample_profiles(&ProfilePreset::Equilibrium { beta: eps }).unwrap();
        let th = build_thermal(&c, &p).unwrap();
        let q = quantum_covariance(&th, &c).unwrap();
        let mut worst = 0.0f64;
        for x in 0..64 {
            for y in 0..64 {
                let cl = if x == y { c.masses[x] / eps } else { 0.0 };
                worst = worst.max((q.c_pp[(x, y)] - cl).abs() / (c.masses[x] / eps));
            }
        }
        for x in 0..63 {
            for y in 0..63 {
                let cl = if x == y { 1.0 / eps } else { 0.0 };
                worst = worst.max((q.c_rr[(x, y)] - cl).abs() * eps);
            }
        }
        assert!(worst < 1e-4, "{worst}");
    }

    // Two equal masses: centre of mass is free, the relative coordinate is an
    // oscillator with reduced mass m/2 and frequency sqrt(2/m). Thermal averages
    // are summed over a truncated Fock basis.
    #[test]
    fn two_site_fock_oracle() {
        let m = 1.3;
        let c = DisorderedChain {
            n: 2,
            masses: vec![m, m],
            mean_mass: m,
            seed: 0,
            mass_law: MassLaw::clean(m),
        };
        let th = build_thermal(&c, &unit()).unwrap();
        let q = quantum_covariance(&th, &c).unwrap();
        let mu = m / 2.0;
        let w = (1.0 / mu).sqrt();
        let levels = 200;
        let z: f64 = (0..levels).map(|k| (-w * k as f64).exp()).sum();
        // <n|(a + a^+)^2|n> = 2n + 1 for both x^2 and P^2 up to their scales.
        let avg: f64 = (0..levels).map(|k| (-w * k as f64).exp() * (2 * k + 1) as f64).sum::<f64>() / z;
        let r2 = avg / (2.0 * mu * w);
        let p_rel2 = avg * mu * w / 2.0;
        // p_1 = P_cm / 2 - P_rel and <P_cm^2> = 2m at unit temperature.
        let p1 = 2.0 * m / 4.0 + p_rel2;
        let p12 = 2.0 * m / 4.0 - p_rel2;
        assert!((q.c_rr[(0, 0)] - r2).abs() < 1e-12, "{} {}", q.c_rr[(0, 0)], r2);
        assert!((q.c_pp[(0, 0)] - p1).abs() < 1e-12);
        assert!((q.c_pp[(1, 1)] - p1).abs() < 1e-12);
        assert!((q.c_pp[(0, 1)] - p12).abs() < 1e-12);
        assert_eq!(q.c_rp_imag[(0, 0)], -0.5);
        assert_eq!(q.c_rp_imag[(0, 1)], 0.5);
    }

    #[test]
    fn thermal_r_basis_diagonalizes_ar() {
        let c = sample_masses(100, MassLaw::default(), 21).unwrap();
        let p = Profiles::from_fns(
            "ramp",
            Arc::new(|y| 0.5 + y),
            Arc::new(|_| 0.0),
            Arc::new(|_| 0.0),
        )
        .unwrap();
        let th = build_thermal(&c, &p).unwrap();
        let d = th.diagnostics(true);
        assert!(d.residual_r < 1e-8 && d.orthonormality_r < 1e-10, "{d:?}");
    }

    #[test]
    fn means_and_epsilon() {
        let c = sample_masses(200, MassLaw::default(), 4).unwrap();
        let p = sample_profiles(&ProfilePreset::MechanicalWave { p_amplitude: 0.3, r_amplitude: 0.2, beta: 1.0 }).unwrap();
        let g = quantum_locally_gibbs(&c, &p).unwrap();
        let total: f64 = g.state.mean_p.iter().sum();
        assert!(total.abs() < 1e-12);
        assert!(g.epsilon.abs() < 0.05);
        for x in 1..200 {
            assert_eq!(g.state.mean_r[x - 1], p.r_bar(x as f64 / 200.0));
        }
        let drift = sample_profiles(&ProfilePreset::CosineMomentum { amplitude: 1.0, beta: 1.0 })
            .unwrap()
            .with_beta(Arc::new(|_| 1.0))
            .unwrap();
        assert!(quantum_locally_gibbs(&c, &drift).is_ok());
        let moving = Profiles::from_fns("moving", Arc::new(|_| 1.0), Arc::new(|_| 1.0), Arc::new(|_| 0.0)).unwrap();
        assert!(quantum_locally_gibbs(&c, &moving).is_err());
    }

    #[test]
    fn evolution_transports_commutator() {
        let n = 48;
        let c = sample_masses(n, MassLaw::default(), 6).unwrap();
        let g = quantum_locally_gibbs(&c, &bump()).unwrap();
        let s = build_spectral(&c).unwrap();
        let map = EvolutionMap::at_macro_time(&s, 0.4);
        let ev = evolve_covariance(&g.state, &map).unwrap();
        // The commutator of the evolved linear map is the initial one, transported.
        let l = crate::dynamics::site_map(&map);
        let mut j = DMatrix::zeros(2 * n - 1, 2 * n - 1);
        let a0 = g.state.imag.as_ref().unwrap();
        for x in 0..n - 1 {
            for y in 0..n {
                j[(x, n - 1 + y)] = a0.rp[(x, y)];
                j[(n - 1 + y, x)] = -a0.rp[(x, y)];
            }
        }
        let jt = &l * j * l.transpose();
        let a1 = ev.imag.as_ref().unwrap();
        let mut worst = 0.0f64;
        for x in 0..n - 1 {
            for y in 0..n {
                worst = worst.max((jt[(x, n - 1 + y)] - a1.rp[(x, y)]).abs());
            }
        }
        assert!(worst < 1e-9, "{worst}");
    }
}
