//! Normal modes of the chain.

mod cache;
mod tridiag_eigen;

pub use cache::{cache_path, load_or_build, read_spectral, write_spectral, CACHE_VERSION};
pub use tridiag_eigen::{
    eig_sym_tridiag, normalize_signs, TridiagEigen, CLAMP_TOL, DEGENERACY_GAP, MAX_QL_ITERATIONS,
};

#[cfg(test)]
pub(crate) use tridiag_eigen::oracle;

use crate::chain_model::{build_ap, DisorderedChain, TridiagSym};
use crate::error::{ChainError, Result};
use nalgebra::{DMatrix, DVector};

/// Frequencies and eigenbases of one chain.
///
/// Mode `k` of the momentum side is column `k` of `phi_p` (`k = 0..n`); mode
/// `k` of the elongation side is column `k - 1` of `phi_r` (`k = 1..n`).
#[derive(Clone, Debug)]
pub struct SpectralData {
    pub n: usize,
    pub omega: Vec<f64>,
    pub phi_p: DMatrix<f64>,
    /// `M^{-1/2} phi_p`.
    pub phi_p_tilde: DMatrix<f64>,
    pub phi_r: DMatrix<f64>,
    pub masses: Vec<f64>,
    pub near_degenerate: Vec<usize>,
}

/// Which post-construction checks to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Checks {
    /// Residuals, completeness, r-basis relation and both orthonormality products.
    Full,
    /// Everything except the two O(n^3) orthonormality products.
    Fast,
    None,
}

/// Outcome of the structural checks.
#[derive(Clone, Copy, Debug, Default)]
pub struct SpectralDiagnostics {
    pub orthonormality_p: f64,
    pub orthonormality_r: f64,
    /// Max over modes of `|A_p phi - omega^2 phi| / |A_p|`.
    pub residual_p: f64,
    /// Same for `A_r = -grad_plus M^{-1} grad_minus` on the r-basis.
    pub residual_r: f64,
    /// Max over sites of `|sum_k phi_x^k^2 - 1|`.
    pub completeness: f64,
}

pub const ORTHONORMALITY_TOL: f64 = 1e-10;
pub const RESIDUAL_TOL: f64 = 1e-9;
pub const R_RESIDUAL_TOL: f64 = 1e-8;

pub fn build_spectral(chain: &DisorderedChain) -> Result<SpectralData> {
    build_spectral_with(chain, Checks::Full)
}

pub fn build_spectral_with(chain: &DisorderedChain, checks: Checks) -> Result<SpectralData> {
    let a = build_ap(chain);
    let eig = eig_sym_tridiag(&a)?;
    let spec = assemble(&eig, &chain.masses, &chain.ground_state())?;
    if checks != Checks::None {
        let d = spec.diagnostics(&a, checks == Checks::Full);
        spec.enforce(&d, checks == Checks::Full)?;
    }
    Ok(spec)
}

/// Builds the spectral data from an eigen-decomposition of a matrix of the form
/// `W^{-1/2} (-grad_minus B grad_plus) W^{-1/2}` with `B = I`, i.e. `A_p`.
///
/// The smallest eigenvalue is set to 0 and its vector replaced by `ground`.
pub(crate) fn assemble(eig: &TridiagEigen, masses: &[f64], ground: &[f64]) -> Result<SpectralData> {
    let n = masses.len();
    let mut phi_p = eig.vectors.clone();
    phi_p.column_mut(0).copy_from_slice(ground);
    // Rounding leaves the low modes with O(eps |A| / omega_1^2) overlap on the
    // exact kernel; project it out.
    let g = DVector::from_column_slice(ground);
    for k in 1..n {
        let mut col = phi_p.column_mut(k);
        let overlap = col.dot(&g);
        col.axpy(-overlap, &g, 1.0);
        let norm = col.norm();
        col.unscale_mut(norm);
    }
    let mut omega: Vec<f64> = eig.values.iter().map(|&l| l.max(0.0).sqrt()).collect();
    omega[0] = 0.0;
    if !(omega[1] > 0.0) {
        return Err(ChainError::SpectralCheck(format!(
            "second eigenvalue {} is not positive",
            eig.values[1]
        )));
    }
    let mut phi_p_tilde = phi_p.clone();
    for (x, m) in masses.iter().enumerate() {
        let s = 1.0 / m.sqrt();
        phi_p_tilde.row_mut(x).scale_mut(s);
    }
    let phi_r = r_basis(&phi_p_tilde, &omega);
    Ok(SpectralData {
        n,
        omega,
        phi_p,
        phi_p_tilde,
        phi_r,
        masses: masses.to_vec(),
        near_degenerate: eig.near_degenerate.clone(),
    })
}

/// Columns `grad_plus(tilde_phi^k) / omega_k` for `k = 1..n`.
pub(crate) fn r_basis(phi_tilde: &DMatrix<f64>, omega: &[f64]) -> DMatrix<f64> {
    let n = phi_tilde.nrows();
    let mut phi_r = DMatrix::<f64>::zeros(n - 1, n - 1);
    for k in 1..n {
        let src = phi_tilde.column(k);
        let inv = 1.0 / omega[k];
        let mut dst = phi_r.column_mut(k - 1);
        for x in 0..n - 1 {
            dst[x] = (src[x + 1] - src[x]) * inv;
        }
    }
    phi_r
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

impl SpectralData {
    pub fn sqrt_masses(&self) -> Vec<f64> {
        self.masses.iter().map(|m| m.sqrt()).collect()
    }

    pub fn diagnostics(&self, a: &TridiagSym, orthonormality: bool) -> SpectralDiagnostics {
        let n = self.n;
        let norm = a.gershgorin_bound();
        let mut d = SpectralDiagnostics::default();
        if orthonormality {
            d.orthonormality_p = max_dev_from_identity(&self.phi_p.tr_mul(&self.phi_p));
            d.orthonormality_r = max_dev_from_identity(&self.phi_r.tr_mul(&self.phi_r));
        }
        let mut buf = vec![0.0; n];
        for k in 0..n {
            let col = self.phi_p.column(k);
            a.matvec(col.as_slice(), &mut buf);
            let w2 = self.omega[k] * self.omega[k];
            let res = buf
                .iter()
                .zip(col.iter())
                .map(|(x, c)| (x - w2 * c).powi(2))
                .sum::<f64>()
                .sqrt();
            d.residual_p = d.residual_p.max(res / norm);
        }
        for k in 1..n {
            let col = self.phi_r.column(k - 1);
            let ar = self.apply_ar(col.as_slice());
            let w2 = self.omega[k] * self.omega[k];
            let res = ar
                .iter()
                .zip(col.iter())
                .map(|(x, c)| (x - w2 * c).powi(2))
                .sum::<f64>()
                .sqrt();
            d.residual_r = d.residual_r.max(res / norm);
        }
        for x in 0..n {
            let s: f64 = self.phi_p.row(x).iter().map(|v| v * v).sum();
            d.completeness = d.completeness.max((s - 1.0).abs());
        }
        d
    }

    fn enforce(&self, d: &SpectralDiagnostics, orthonormality: bool) -> Result<()> {
        let fail = |what: &str, v: f64, tol: f64| {
            Err(ChainError::SpectralCheck(format!("{what} = {v:e} exceeds {tol:e} (n = {})", self.n)))
        };
        if orthonormality && d.orthonormality_p > ORTHONORMALITY_TOL {
            return fail("p-basis orthonormality defect", d.orthonormality_p, ORTHONORMALITY_TOL);
        }
        if orthonormality && d.orthonormality_r > ORTHONORMALITY_TOL {
            return fail("r-basis orthonormality defect", d.orthonormality_r, ORTHONORMALITY_TOL);
        }
        if d.residual_p > RESIDUAL_TOL {
            return fail("relative eigen-residual", d.residual_p, RESIDUAL_TOL);
        }
        if d.residual_r > R_RESIDUAL_TOL {
            return fail("r-basis eigen-residual", d.residual_r, R_RESIDUAL_TOL);
        }
        if d.completeness > ORTHONORMALITY_TOL {
            return fail("completeness defect", d.completeness, ORTHONORMALITY_TOL);
        }
        Ok(())
    }

    /// `A_r r = -grad_plus(M^{-1} grad_minus r)`.
    pub fn apply_ar(&self, r: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut v = vec![0.0; n];
        for x in 0..n {
            let right = if x < n - 1 { r[x] } else { 0.0 };
            let left = if x > 0 { r[x - 1] } else { 0.0 };
            v[x] = (right - left) / self.masses[x];
        }
        (0..n - 1).map(|x| -(v[x + 1] - v[x])).collect()
    }

    /// `(r_hat, p_hat)` with `r_hat` of length n and `r_hat[0] = 0`.
    pub fn mode_transform(&self, r: &[f64], p: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.n;
        check_len("r", n - 1, r.len())?;
        check_len("p", n, p.len())?;
        let p_hat = self.phi_p_tilde.tr_mul(&DVector::from_column_slice(p));
        let rr = self.phi_r.tr_mul(&DVector::from_column_slice(r));
        let mut r_hat = vec![0.0; n];
        r_hat[1..].copy_from_slice(rr.as_slice());
        Ok((r_hat, p_hat.as_slice().to_vec()))
    }

    pub fn inverse_mode_transform(&self, r_hat: &[f64], p_hat: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.n;
        check_len("r_hat", n, r_hat.len())?;
        check_len("p_hat", n, p_hat.len())?;
        let r = &self.phi_r * DVector::from_column_slice(&r_hat[1..]);
        let mut p = &self.phi_p * DVector::from_column_slice(p_hat);
        for (x, m) in self.masses.iter().enumerate() {
            p[x] *= m.sqrt();
        }
        Ok((r.as_slice().to_vec(), p.as_slice().to_vec()))
    }

    /// `M^{1/2} phi_p`, the site-space image of the momentum modes.
    pub fn u_p(&self) -> DMatrix<f64> {
        let mut u = self.phi_p.clone();
        for (x, m) in self.masses.iter().enumerate() {
            u.row_mut(x).scale_mut(m.sqrt());
        }
        u
    }

    /// Approximate heap footprint in bytes.
    pub fn heap_bytes(&self) -> usize {
        8 * (2 * self.n * self.n + (self.n - 1) * (self.n - 1) + 2 * self.n)
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(ChainError::DimensionMismatch { what, expected, got });
    }
    Ok(())
}
