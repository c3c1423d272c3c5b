//! Gaussian states of the chain: means plus the two-point function of `(r, p)`.

use crate::chain_model::{DisorderedChain, Profiles};
use crate::error::{ChainError, Result};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flavor {
    Classical,
    QuantumQuasiFree,
}

impl Flavor {
    pub fn name(&self) -> &'static str {
        match self {
            Flavor::Classical => "classical",
            Flavor::QuantumQuasiFree => "quantum",
        }
    }
}

/// The three independent blocks of a two-point matrix over `(r, p)`.
///
/// `rr` is `(n-1) x (n-1)`, `pp` is `n x n`, `rp` is `(n-1) x n`. The `pr`
/// block is `rp^T` for a symmetric matrix and `-rp^T` for an antisymmetric one.
#[derive(Clone, Debug, PartialEq)]
pub struct Blocks {
    pub rr: DMatrix<f64>,
    pub pp: DMatrix<f64>,
    pub rp: DMatrix<f64>,
}

impl Blocks {
    pub fn zeros(n: usize) -> Self {
        Blocks {
            rr: DMatrix::zeros(n - 1, n - 1),
            pp: DMatrix::zeros(n, n),
            rp: DMatrix::zeros(n - 1, n),
        }
    }

    pub fn n(&self) -> usize {
        self.pp.nrows()
    }

    pub fn max_abs_diff(&self, other: &Blocks) -> f64 {
        (&self.rr - &other.rr)
            .amax()
            .max((&self.pp - &other.pp).amax())
            .max((&self.rp - &other.rp).amax())
    }

    pub fn amax(&self) -> f64 {
        self.rr.amax().max(self.pp.amax()).max(self.rp.amax())
    }
}

/// Means and ordered two-point function `<X_i X_j> - <X_i><X_j> = S_ij + i A_ij`.
///
/// Classical states have `A = 0` and `imag = None`. Quantum quasi-free states
/// carry the commutator part in `imag`.
#[derive(Clone, Debug)]
pub struct GaussianChainState {
    pub mean_r: Vec<f64>,
    pub mean_p: Vec<f64>,
    pub sym: Blocks,
    pub imag: Option<Blocks>,
    pub flavor: Flavor,
}

impl GaussianChainState {
    pub fn n(&self) -> usize {
        self.mean_p.len()
    }

    /// Mean site energies `<e_x>` with `r_n = 0`.
    pub fn mean_energy(&self, masses: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|x| {
                let kin = (self.mean_p[x].powi(2) + self.sym.pp[(x, x)]) / (2.0 * masses[x]);
                let pot = if x < n - 1 {
                    (self.mean_r[x].powi(2) + self.sym.rr[(x, x)]) / 2.0
                } else {
                    0.0
                };
                kin + pot
            })
            .collect()
    }

    pub fn is_diagonal(&self) -> bool {
        let off_zero = |m: &DMatrix<f64>| {
            (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| i == j || m[(i, j)] == 0.0))
        };
        off_zero(&self.sym.rr) && off_zero(&self.sym.pp) && self.sym.rp.iter().all(|&v| v == 0.0)
    }
}

/// Local Gibbs state: product of site Gaussians with the profile parameters.
pub fn local_gibbs_moments(chain: &DisorderedChain, profiles: &Profiles) -> GaussianChainState {
    let n = chain.n;
    let y = |x: usize| x as f64 / n as f64;
    let mean_r = (1..n).map(|x| profiles.r_bar(y(x))).collect();
    let mean_p = (1..=n)
        .map(|x| profiles.p_bar(y(x)) * chain.masses[x - 1] / chain.mean_mass)
        .collect();
    let mut sym = Blocks::zeros(n);
    for x in 1..=n {
        let b = profiles.beta(y(x));
        sym.pp[(x - 1, x - 1)] = chain.masses[x - 1] / b;
        if x < n {
            sym.rr[(x - 1, x - 1)] = 1.0 / b;
        }
    }
    GaussianChainState {
        mean_r,
        mean_p,
        sym,
        imag: None,
        flavor: Flavor::Classical,
    }
}

/// Draws one `(r, p)` configuration from a classical state with diagonal covariance.
pub fn sample_state<R: Rng>(state: &GaussianChainState, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
    check_samplable(state)?;
    Ok(draw(state, rng))
}

fn check_samplable(state: &GaussianChainState) -> Result<()> {
    if state.flavor != Flavor::Classical {
        return Err(ChainError::FlavorMismatch {
            expected: "classical",
            got: state.flavor.name(),
        });
    }
    if !state.is_diagonal() {
        return Err(ChainError::InvalidParameter(
            "sampling needs a diagonal covariance (t = 0 state)".into(),
        ));
    }
    Ok(())
}

fn draw<R: Rng>(state: &GaussianChainState, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let r = state
        .mean_r
        .iter()
        .enumerate()
        .map(|(x, m)| m + state.sym.rr[(x, x)].sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let p = state
        .mean_p
        .iter()
        .enumerate()
        .map(|(x, m)| m + state.sym.pp[(x, x)].sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    (r, p)
}

/// Draws `count` configurations as matrix columns.
pub fn sample_batch<R: Rng>(
    state: &GaussianChainState,
    count: usize,
    rng: &mut R,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_samplable(state)?;
    let n = state.n();
    let mut rs = DMatrix::zeros(n - 1, count);
    let mut ps = DMatrix::zeros(n, count);
    for j in 0..count {
        let (r, p) = draw(state, rng);
        rs.column_mut(j).copy_from_slice(&r);
        ps.column_mut(j).copy_from_slice(&p);
    }
    Ok((rs, ps))
}
