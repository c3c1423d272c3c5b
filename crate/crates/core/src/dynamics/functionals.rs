//! Empirical functionals, quadratic variations and the Wick energy covariance.

use crate::classical_state::{Flavor, GaussianChainState};
use crate::error::{ChainError, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    R,
    P,
    E,
}

impl Field {
    pub fn name(&self) -> &'static str {
        match self {
            Field::R => "r",
            Field::P => "p",
            Field::E => "e",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FunctionalKind {
    MeanR,
    MeanP,
    MeanE,
    QuadVarR,
    QuadVarP,
    QuadVarE,
}

impl FunctionalKind {
    pub fn mean(field: Field) -> Self {
        match field {
            Field::R => FunctionalKind::MeanR,
            Field::P => FunctionalKind::MeanP,
            Field::E => FunctionalKind::MeanE,
        }
    }

    pub fn quad_var(field: Field) -> Self {
        match field {
            Field::R => FunctionalKind::QuadVarR,
            Field::P => FunctionalKind::QuadVarP,
            Field::E => FunctionalKind::QuadVarE,
        }
    }

    pub fn is_quad_var(&self) -> bool {
        matches!(self, FunctionalKind::QuadVarR | FunctionalKind::QuadVarP | FunctionalKind::QuadVarE)
    }

    pub fn name(&self) -> &'static str {
        match self {
            FunctionalKind::MeanR => "mean_r",
            FunctionalKind::MeanP => "mean_p",
            FunctionalKind::MeanE => "mean_e",
            FunctionalKind::QuadVarR => "quadvar_r",
            FunctionalKind::QuadVarP => "quadvar_p",
            FunctionalKind::QuadVarE => "quadvar_e",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalResult {
    pub f_name: String,
    pub kind: FunctionalKind,
    pub value: f64,
    pub n: usize,
    pub t: f64,
    pub seed: u64,
}

impl FunctionalResult {
    pub fn new(f_name: &str, kind: FunctionalKind, value: f64, n: usize, t: f64, seed: u64) -> Result<Self> {
        if !value.is_finite() || (kind.is_quad_var() && value < 0.0) {
            return Err(ChainError::InvalidParameter(format!(
                "{} = {value} is not an admissible value",
                kind.name()
            )));
        }
        Ok(FunctionalResult {
            f_name: f_name.to_string(),
            kind,
            value,
            n,
            t,
            seed,
        })
    }
}

fn site_values<F: Fn(f64) -> f64>(f: &F, n: usize, len: usize) -> Vec<f64> {
    (1..=len).map(|x| f(x as f64 / n as f64)).collect()
}

/// `(1/n) sum_x f(x/n) <z_x>`.
pub fn empirical_mean_functional<F: Fn(f64) -> f64>(
    f: F,
    z: Field,
    state: &GaussianChainState,
    masses: &[f64],
) -> f64 {
    let n = state.n();
    let vals: Vec<f64> = match z {
        Field::R => state.mean_r.clone(),
        Field::P => state.mean_p.clone(),
        Field::E => state.mean_energy(masses),
    };
    let fx = site_values(&f, n, vals.len());
    fx.iter().zip(&vals).map(|(a, b)| a * b).sum::<f64>() / n as f64
}

/// `(1/n^2) f^T C_zz f` for `z` in `{r, p}`.
pub fn quad_var<F: Fn(f64) -> f64>(f: F, z: Field, state: &GaussianChainState) -> Result<f64> {
    let n = state.n();
    let c = match z {
        Field::R => &state.sym.rr,
        Field::P => &state.sym.pp,
        Field::E => {
            return Err(ChainError::InvalidParameter(
                "energy quadratic variation needs quad_var_energy".into(),
            ))
        }
    };
    let fx = site_values(&f, n, c.nrows());
    let mut total = 0.0;
    for j in 0..c.ncols() {
        let col = c.column(j);
        let s: f64 = col.iter().zip(&fx).map(|(a, b)| a * b).sum();
        total += fx[j] * s;
    }
    Ok((total / (n * n) as f64).max(0.0))
}

fn check_flavor(state: &GaussianChainState) -> Result<()> {
    match (state.flavor, state.imag.is_some()) {
        (Flavor::Classical, false) | (Flavor::QuantumQuasiFree, true) => Ok(()),
        (Flavor::Classical, true) => Err(ChainError::FlavorMismatch {
            expected: "quantum",
            got: "classical",
        }),
        (Flavor::QuantumQuasiFree, false) => Err(ChainError::FlavorMismatch {
            expected: "classical",
            got: "quantum",
        }),
    }
}

/// Real part of `Cov(e_x, e_y)` by Wick pairing.
///
/// With `A_a = mu_a + X_a`, `X` centered Gaussian (or quasi-free) and ordered
/// two-point function `<X_a X_b> = S_ab + i A_ab`, pairing gives
///
/// ```text
/// Cov(A_a^2, B_b^2) = 2 <X_a X_b>^2 + 4 mu_a mu_b <X_a X_b>
/// Re Cov(A_a^2, B_b^2) = 2 (S_ab^2 - A_ab^2) + 4 mu_a mu_b S_ab
/// ```
///
/// and `e_x = p_x^2 / 2m_x + r_x^2 / 2` (no `r` term at `x = n`) yields
///
/// ```text
/// Cov(e_x, e_y) = [ W_pp(x,y) / (m_x m_y) + W_pr(x,y) / m_x
///                 + W_rp(x,y) / m_y + W_rr(x,y) ] / 4
/// ```
///
/// with `W_ab` the bracket above. Classical states have `A = 0`. Odd moments
/// vanish, so no other terms appear.
fn energy_cov_entry(state: &GaussianChainState, masses: &[f64], x: usize, y: usize) -> f64 {
    let n = state.n();
    let s = &state.sym;
    let a = state.imag.as_ref();
    let mr = &state.mean_r;
    let mp = &state.mean_p;
    let w = |sv: f64, av: f64, mu_a: f64, mu_b: f64| 2.0 * (sv * sv - av * av) + 4.0 * mu_a * mu_b * sv;

    let mut total = w(s.pp[(x, y)], a.map_or(0.0, |a| a.pp[(x, y)]), mp[x], mp[y]) / (masses[x] * masses[y]);
    if y < n - 1 {
        // <p_x r_y> = S_rp[y, x] (symmetric part), A_pr[x, y] = -A_rp[y, x].
        total += w(s.rp[(y, x)], a.map_or(0.0, |a| a.rp[(y, x)]), mp[x], mr[y]) / masses[x];
    }
    if x < n - 1 {
        total += w(s.rp[(x, y)], a.map_or(0.0, |a| a.rp[(x, y)]), mr[x], mp[y]) / masses[y];
    }
    if x < n - 1 && y < n - 1 {
        total += w(s.rr[(x, y)], a.map_or(0.0, |a| a.rr[(x, y)]), mr[x], mr[y]);
    }
    total / 4.0
}

/// Full `n x n` matrix of `Re Cov(e_x, e_y)`.
pub fn energy_covariance(state: &GaussianChainState, masses: &[f64]) -> Result<DMatrix<f64>> {
    check_flavor(state)?;
    let n = state.n();
    Ok(DMatrix::from_fn(n, n, |x, y| energy_cov_entry(state, masses, x, y)))
}

/// `(1/n^2) sum_{x,y} f(x/n) f(y/n) Re Cov(e_x, e_y)`.
pub fn quad_var_energy<F: Fn(f64) -> f64>(f: F, state: &GaussianChainState, masses: &[f64]) -> Result<f64> {
    check_flavor(state)?;
    let n = state.n();
    let fx = site_values(&f, n, n);
    let mut total = 0.0;
    for y in 0..n {
        if fx[y] == 0.0 {
            continue;
        }
        let mut col = 0.0;
        for x in 0..n {
            if fx[x] != 0.0 {
                col += fx[x] * energy_cov_entry(state, masses, x, y);
            }
        }
        total += fx[y] * col;
    }
    Ok((total / (n * n) as f64).max(0.0))
}
