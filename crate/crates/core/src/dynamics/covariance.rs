//! Covariance propagation in mode space.
//!
//! Site blocks are moved to mode coordinates once (`r_hat = phi_r^T r`,
//! `p_hat = tilde_phi^T p`), rotated elementwise for any number of times, and
//! moved back with `r = phi_r r_hat`, `p = M^{1/2} phi p_hat`.

use super::EvolutionMap;
use crate::classical_state::{Blocks, GaussianChainState};
use crate::error::{ChainError, Result};
use crate::spectral::SpectralData;
use nalgebra::DMatrix;

/// Two-point function in mode coordinates. Row/column `i` of the `r` side is
/// mode `i + 1`; the `p` side is indexed by the mode directly.
#[derive(Clone, Debug)]
pub struct ModeCovariance {
    pub sym: Blocks,
    pub imag: Option<Blocks>,
}

/// `L^T C R`, exploiting zero, diagonal and sparse `C`.
fn sandwich(l: &DMatrix<f64>, c: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
    let nnz = c.iter().filter(|&&v| v != 0.0).count();
    if nnz == 0 {
        return DMatrix::zeros(l.ncols(), r.ncols());
    }
    let cr = if nnz <= 4 * c.nrows().max(c.ncols()) {
        let mut cr = DMatrix::<f64>::zeros(c.nrows(), r.ncols());
        for j in 0..c.ncols() {
            for i in 0..c.nrows() {
                let v = c[(i, j)];
                if v != 0.0 {
                    for k in 0..r.ncols() {
                        cr[(i, k)] += v * r[(j, k)];
                    }
                }
            }
        }
        cr
    } else {
        c * r
    };
    l.tr_mul(&cr)
}

fn blocks_to_modes(b: &Blocks, spec: &SpectralData) -> Blocks {
    Blocks {
        rr: sandwich(&spec.phi_r, &b.rr, &spec.phi_r),
        pp: sandwich(&spec.phi_p_tilde, &b.pp, &spec.phi_p_tilde),
        rp: sandwich(&spec.phi_r, &b.rp, &spec.phi_p_tilde),
    }
}

pub fn to_modes(state: &GaussianChainState, spec: &SpectralData) -> ModeCovariance {
    ModeCovariance {
        sym: blocks_to_modes(&state.sym, spec),
        imag: state.imag.as_ref().map(|a| blocks_to_modes(a, spec)),
    }
}

fn blocks_from_modes(b: &Blocks, spec: &SpectralData, u_p: &DMatrix<f64>) -> Blocks {
    let back = |u: &DMatrix<f64>, c: &DMatrix<f64>, v: &DMatrix<f64>| {
        if c.iter().all(|&x| x == 0.0) {
            DMatrix::zeros(u.nrows(), v.nrows())
        } else {
            (u * c) * v.transpose()
        }
    };
    Blocks {
        rr: back(&spec.phi_r, &b.rr, &spec.phi_r),
        pp: back(u_p, &b.pp, u_p),
        rp: back(&spec.phi_r, &b.rp, u_p),
    }
}

/// Site-space blocks `(sym, imag)` of a mode-space two-point function.
pub fn from_modes(mc: &ModeCovariance, spec: &SpectralData) -> (Blocks, Option<Blocks>) {
    let u_p = spec.u_p();
    let sym = blocks_from_modes(&mc.sym, spec, &u_p);
    let imag = mc.imag.as_ref().map(|a| blocks_from_modes(a, spec, &u_p));
    (sym, imag)
}

/// Rotates one set of mode blocks. `parity` is +1 for the symmetric part and
/// -1 for the antisymmetric part, fixing `pr = parity * rp^T`.
fn rotate_blocks(b: &Blocks, map: &EvolutionMap, parity: f64) -> Blocks {
    let n = b.n();
    let (c, s) = (&map.cos, &map.sin);
    // Accessors on the padded mode index (r_hat_0 = 0).
    let rr = |k: usize, l: usize| if k == 0 || l == 0 { 0.0 } else { b.rr[(k - 1, l - 1)] };
    let rp = |k: usize, l: usize| if k == 0 { 0.0 } else { b.rp[(k - 1, l)] };
    let pr = |k: usize, l: usize| if l == 0 { 0.0 } else { parity * b.rp[(l - 1, k)] };
    let pp = |k: usize, l: usize| b.pp[(k, l)];

    let mut out = Blocks::zeros(n);
    for l in 1..n {
        for k in 1..n {
            out.rr[(k - 1, l - 1)] = c[k] * c[l] * rr(k, l)
                + c[k] * s[l] * rp(k, l)
                + s[k] * c[l] * pr(k, l)
                + s[k] * s[l] * pp(k, l);
        }
    }
    for l in 0..n {
        for k in 0..n {
            out.pp[(k, l)] = c[k] * c[l] * pp(k, l) - c[k] * s[l] * pr(k, l) - s[k] * c[l] * rp(k, l)
                + s[k] * s[l] * rr(k, l);
        }
    }
    for l in 0..n {
        for k in 1..n {
            out.rp[(k - 1, l)] = c[k] * c[l] * rp(k, l) - c[k] * s[l] * rr(k, l) + s[k] * c[l] * pp(k, l)
                - s[k] * s[l] * pr(k, l);
        }
    }
    out
}

impl ModeCovariance {
    pub fn rotate(&self, map: &EvolutionMap) -> ModeCovariance {
        ModeCovariance {
            sym: rotate_blocks(&self.sym, map, 1.0),
            imag: self.imag.as_ref().map(|a| rotate_blocks(a, map, -1.0)),
        }
    }
}

/// State at the time of `map`: means and both parts of the two-point function.
pub fn evolve_covariance(state: &GaussianChainState, map: &EvolutionMap) -> Result<GaussianChainState> {
    let spec = map.spec;
    let (mean_r, mean_p) = super::evolve_means(state, map)?;
    let mc = to_modes(state, spec).rotate(map);
    let (sym, imag) = from_modes(&mc, spec);
    Ok(GaussianChainState {
        mean_r,
        mean_p,
        sym,
        imag,
        flavor: state.flavor,
    })
}

/// Low-mode, high-mode and cross parts of a site-space two-point function.
#[derive(Clone, Debug)]
pub struct SplitBlocks {
    pub low: Blocks,
    pub high: Blocks,
    pub cross: Blocks,
    /// First mode index of the high set `I(gamma) = (n^{1-gamma}, n]`.
    pub first_high: usize,
}

/// First mode index `k > n^{1-gamma}`.
pub fn first_high_mode(n: usize, gamma: f64) -> usize {
    (n as f64).powf(1.0 - gamma).floor() as usize + 1
}

/// Splits the symmetric part of `mc` by restricting the mode sums to the low
/// set `k <= n^{1-gamma}`, the high set `k > n^{1-gamma}`, or one of each.
pub fn mode_split_covariance(mc: &ModeCovariance, spec: &SpectralData, gamma: f64) -> Result<SplitBlocks> {
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(ChainError::InvalidParameter(format!("gamma = {gamma} must lie in (0, 1/2)")));
    }
    let n = spec.n;
    let k0 = first_high_mode(n, gamma);
    let is_high = |k: usize| k >= k0;
    let mask = |b: &Blocks, keep: &dyn Fn(bool, bool) -> bool| {
        let mut out = b.clone();
        for l in 0..n {
            for k in 0..n {
                if !keep(is_high(k), is_high(l)) {
                    out.pp[(k, l)] = 0.0;
                }
                if k >= 1 && !keep(is_high(k), is_high(l)) {
                    out.rp[(k - 1, l)] = 0.0;
                }
                if k >= 1 && l >= 1 && !keep(is_high(k), is_high(l)) {
                    out.rr[(k - 1, l - 1)] = 0.0;
                }
            }
        }
        out
    };
    let u_p = spec.u_p();
    let low = mask(&mc.sym, &|a, b| !a && !b);
    let high = mask(&mc.sym, &|a, b| a && b);
    let cross = mask(&mc.sym, &|a, b| a != b);
    Ok(SplitBlocks {
        low: blocks_from_modes(&low, spec, &u_p),
        high: blocks_from_modes(&high, spec, &u_p),
        cross: blocks_from_modes(&cross, spec, &u_p),
        first_high: k0,
    })
}

/// Dense site-space map `L(t)` on `(r_1..r_{n-1}, p_1..p_n)`. Intended for small n.
pub fn site_map(map: &EvolutionMap) -> DMatrix<f64> {
    let spec = map.spec;
    let n = spec.n;
    let dim = 2 * n - 1;
    let mut t = DMatrix::<f64>::zeros(dim, dim);
    let mut tinv = DMatrix::<f64>::zeros(dim, dim);
    let u_p = spec.u_p();
    t.view_mut((0, 0), (n - 1, n - 1)).copy_from(&spec.phi_r.transpose());
    t.view_mut((n - 1, n - 1), (n, n)).copy_from(&spec.phi_p_tilde.transpose());
    tinv.view_mut((0, 0), (n - 1, n - 1)).copy_from(&spec.phi_r);
    tinv.view_mut((n - 1, n - 1), (n, n)).copy_from(&u_p);
    let mut rot = DMatrix::<f64>::zeros(dim, dim);
    for k in 0..n {
        let (c, s) = (map.cos[k], map.sin[k]);
        let pk = n - 1 + k;
        rot[(pk, pk)] = c;
        if k >= 1 {
            let rk = k - 1;
            rot[(rk, rk)] = c;
            rot[(rk, pk)] = s;
            rot[(pk, rk)] = -s;
        }
    }
    tinv * rot * t
}
