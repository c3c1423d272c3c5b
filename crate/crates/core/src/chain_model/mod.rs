//! Random-mass chains and their dynamical matrix.

mod io;
mod profiles;

pub use io::{read_chain, write_chain};
pub use profiles::{sample_profiles, ProfilePreset, Profiles, ScalarFn, Tabulated, TestFunction};

use crate::error::{ChainError, Result};
use crate::rng::{self, Domain};
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

/// Law of the i.i.d. masses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MassLaw {
    /// Uniform on `[lo, hi]`; `lo == hi` gives the clean (equal-mass) chain.
    UniformInterval { lo: f64, hi: f64 },
    /// `lo + (hi - lo) * Beta(a, b)`.
    ScaledBeta { a: f64, b: f64, lo: f64, hi: f64 },
}

impl Default for MassLaw {
    fn default() -> Self {
        MassLaw::ScaledBeta {
            a: 2.0,
            b: 2.0,
            lo: 1.0,
            hi: 2.0,
        }
    }
}

impl MassLaw {
    pub fn clean(m: f64) -> Self {
        MassLaw::UniformInterval { lo: m, hi: m }
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            MassLaw::UniformInterval { lo, hi } => (lo, hi),
            MassLaw::ScaledBeta { lo, hi, .. } => (lo, hi),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            MassLaw::UniformInterval { lo, hi } => 0.5 * (lo + hi),
            MassLaw::ScaledBeta { a, b, lo, hi } => lo + (hi - lo) * a / (a + b),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            MassLaw::UniformInterval { lo, hi } => (hi - lo).powi(2) / 12.0,
            MassLaw::ScaledBeta { a, b, lo, hi } => {
                (hi - lo).powi(2) * a * b / ((a + b).powi(2) * (a + b + 1.0))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.support();
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(ChainError::InvalidMassLaw("support must be finite".into()));
        }
        if lo <= 0.0 {
            return Err(ChainError::InvalidMassLaw(format!("m_minus = {lo} must be > 0")));
        }
        if hi < lo {
            return Err(ChainError::InvalidMassLaw(format!("empty support [{lo}, {hi}]")));
        }
        if let MassLaw::ScaledBeta { a, b, .. } = *self {
            if !(a > 0.0 && b > 0.0) {
                return Err(ChainError::InvalidMassLaw(format!("Beta({a}, {b}) needs a, b > 0")));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match *self {
            MassLaw::UniformInterval { lo, hi } => format!("uniform({lo},{hi})"),
            MassLaw::ScaledBeta { a, b, lo, hi } => format!("beta({a},{b},{lo},{hi})"),
        }
    }
}

/// A chain of `n` particles with i.i.d. random masses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisorderedChain {
    pub n: usize,
    pub masses: Vec<f64>,
    /// Mean of the mass law (not the sample mean).
    pub mean_mass: f64,
    pub seed: u64,
    pub mass_law: MassLaw,
}

impl DisorderedChain {
    pub fn m_minus(&self) -> f64 {
        self.mass_law.support().0
    }

    pub fn m_plus(&self) -> f64 {
        self.mass_law.support().1
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Normalized kernel vector of `A_p`, `sqrt(m_x) / sqrt(sum m)`.
    pub fn ground_state(&self) -> Vec<f64> {
        let norm = self.total_mass().sqrt();
        self.masses.iter().map(|m| m.sqrt() / norm).collect()
    }
}

pub fn sample_masses(n: usize, law: MassLaw, seed: u64) -> Result<DisorderedChain> {
    if n < 2 {
        return Err(ChainError::InvalidSize(n));
    }
    law.validate()?;
    let mut rng = rng::stream(Domain::Masses, 0, seed, n as u64);
    let masses: Vec<f64> = match law {
        MassLaw::UniformInterval { lo, hi } if hi == lo => vec![lo; n],
        MassLaw::UniformInterval { lo, hi } => {
            (0..n).map(|_| rng.gen_range(lo..=hi)).collect()
        }
        MassLaw::ScaledBeta { a, b, lo, hi } => {
            let beta = Beta::new(a, b).map_err(|e| ChainError::InvalidMassLaw(e.to_string()))?;
            (0..n).map(|_| lo + (hi - lo) * beta.sample(&mut rng)).collect()
        }
    };
    Ok(DisorderedChain {
        n,
        masses,
        mean_mass: law.mean(),
        seed,
        mass_law: law,
    })
}

/// Symmetric tridiagonal matrix stored by its diagonals.
#[derive(Clone, Debug, PartialEq)]
pub struct TridiagSym {
    pub diag: Vec<f64>,
    pub offdiag: Vec<f64>,
}

impl TridiagSym {
    pub fn new(diag: Vec<f64>, offdiag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || offdiag.len() + 1 != diag.len() {
            return Err(ChainError::DimensionMismatch {
                what: "tridiagonal off-diagonal",
                expected: diag.len().saturating_sub(1),
                got: offdiag.len(),
            });
        }
        Ok(TridiagSym { diag, offdiag })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, v: &[f64], out: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(v.len(), n);
        debug_assert_eq!(out.len(), n);
        for x in 0..n {
            let mut s = self.diag[x] * v[x];
            if x > 0 {
                s += self.offdiag[x - 1] * v[x - 1];
            }
            if x + 1 < n {
                s += self.offdiag[x] * v[x + 1];
            }
            out[x] = s;
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.matvec(v, &mut out);
        out
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.dim();
        let mut a = nalgebra::DMatrix::zeros(n, n);
        for x in 0..n {
            a[(x, x)] = self.diag[x];
            if x + 1 < n {
                a[(x, x + 1)] = self.offdiag[x];
                a[(x + 1, x)] = self.offdiag[x];
            }
        }
        a
    }

    /// Gershgorin bound on the spectral radius, an upper bound for the 2-norm.
    pub fn gershgorin_bound(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|x| {
                let mut r = self.diag[x].abs();
                if x > 0 {
                    r += self.offdiag[x - 1].abs();
                }
                if x + 1 < n {
                    r += self.offdiag[x].abs();
                }
                r
            })
            .fold(0.0, f64::max)
    }
}

/// `A_p = M^{-1/2} (-Laplacian) M^{-1/2}` with free boundaries.
pub fn build_ap(chain: &DisorderedChain) -> TridiagSym {
    let n = chain.n;
    let m = &chain.masses;
    let diag = (0..n)
        .map(|x| {
            let d = if x == 0 || x == n - 1 { 1.0 } else { 2.0 };
            d / m[x]
        })
        .collect();
    let offdiag = (0..n - 1).map(|x| -1.0 / (m[x] * m[x + 1]).sqrt()).collect();
    TridiagSym { diag, offdiag }
}

/// Forward difference `(v_{x+1} - v_x)`, mapping length n to n - 1.
pub fn grad_plus(v: &[f64]) -> Vec<f64> {
    v.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Backward difference `(r_x - r_{x-1})` with `r_0 = r_n = 0`, mapping n - 1 to n.
pub fn grad_minus(r: &[f64]) -> Vec<f64> {
    let n = r.len() + 1;
    (0..n)
        .map(|x| {
            let right = if x < n - 1 { r[x] } else { 0.0 };
            let left = if x > 0 { r[x - 1] } else { 0.0 };
            right - left
        })
        .collect()
}
