//! Linear Euler system on `[0, 1]` solved by a sine/cosine expansion.
//!
//! `dt r = dy p / m_bar`, `dt p = dy r`, `dt e = dy (r p) / m_bar`, with
//! `r(0) = r(1) = 0`. The energy is slaved to the mechanical fields:
//! `e = p^2 / (2 m_bar) + r^2 / 2 + C(y)`, where `C = 1 / beta` classically and
//! `C = b_bar` in the quantum case.

use crate::chain_model::{Profiles, ScalarFn, Tabulated};
use crate::dynamics::Field;
use crate::error::{ChainError, Result};
use crate::quadrature;
use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

/// Tolerance on the projection of the initial profiles.
pub const PROJECTION_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub enum MacroFlavor {
    Classical,
    /// Quantum thermal energy density `b_bar(y)`.
    Quantum(Tabulated),
}

/// Spectral solution, evaluable at any `(y, t)`.
#[derive(Clone)]
pub struct MacroSolver {
    pub mean_mass: f64,
    pub n_modes: usize,
    /// `a_j`, `j = 1..=n_modes`, at index `j - 1`.
    a0: Vec<f64>,
    /// `b_j`, `j = 0..=n_modes`.
    b0: Vec<f64>,
    constant: ScalarFn,
    constant_breaks: Option<Vec<f64>>,
}

impl fmt::Debug for MacroSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MacroSolver")
            .field("mean_mass", &self.mean_mass)
            .field("n_modes", &self.n_modes)
            .finish_non_exhaustive()
    }
}

/// Fields sampled on the uniform grid `y_i = i / g`, `i = 0..=g`.
#[derive(Clone, Debug, PartialEq)]
pub struct MacroFields {
    pub t: f64,
    pub mean_mass: f64,
    pub y: Vec<f64>,
    pub r: Vec<f64>,
    pub p: Vec<f64>,
    pub e: Vec<f64>,
}

/// Max-norm residuals of the three equations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Residuals {
    pub r: f64,
    pub p: f64,
    pub e: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.r.max(self.p).max(self.e)
    }
}

// sin(j pi y) with the phase reduced mod 2 so that y = 0 and y = 1 give exact zeros.
fn sin_mode(j: usize, y: f64) -> f64 {
    let ph = (j as f64 * y) % 2.0;
    if ph == 0.0 || ph == 1.0 {
        0.0
    } else {
        (PI * ph).sin()
    }
}

fn cos_mode(j: usize, y: f64) -> f64 {
    (PI * ((j as f64 * y) % 2.0)).cos()
}

/// Fourier coefficients of `r_bar` (sine) and `p_bar` (cosine) with `panels`
/// Gauss-Legendre panels per piece.
fn project(profiles: &Profiles, n_modes: usize, pieces: &[f64], panels: usize) -> (Vec<f64>, Vec<f64>) {
    let (nodes, weights) = quadrature::gauss_legendre(16);
    let mut a = vec![0.0; n_modes];
    let mut b = vec![0.0; n_modes + 1];
    for w in pieces.windows(2) {
        let h = (w[1] - w[0]) / panels as f64;
        for k in 0..panels {
            let lo = w[0] + k as f64 * h;
            for (u, wt) in nodes.iter().zip(&weights) {
                let y = lo + 0.5 * h * (u + 1.0);
                let wy = 0.5 * h * wt;
                let (r, p) = (profiles.r_bar(y), profiles.p_bar(y));
                b[0] += wy * p;
                for j in 1..=n_modes {
                    // cos/sin by recurrence would drift; direct evaluation is cheap enough.
                    let (s, c) = (PI * j as f64 * y).sin_cos();
                    a[j - 1] += 2.0 * wy * r * s;
                    b[j] += 2.0 * wy * p * c;
                }
            }
        }
    }
    (a, b)
}

impl MacroSolver {
    pub fn new(profiles: &Profiles, mean_mass: f64, n_modes: usize, flavor: &MacroFlavor) -> Result<Self> {
        if !(mean_mass > 0.0 && mean_mass.is_finite()) {
            return Err(ChainError::InvalidParameter(format!("mean mass {mean_mass}")));
        }
        if n_modes == 0 {
            return Err(ChainError::InvalidParameter("n_modes must be positive".into()));
        }
        let pieces: Vec<f64> = profiles.breakpoints().map(|b| b.to_vec()).unwrap_or_else(|| vec![0.0, 1.0]);
        // Enough panels to resolve the highest mode, then double until stable.
        let mut panels = (n_modes / (8 * (pieces.len() - 1)) + 4).max(4);
        let (mut a, mut b) = project(profiles, n_modes, &pieces, panels);
        let mut err = f64::INFINITY;
        while panels <= 1 << 14 {
            panels *= 2;
            let (a2, b2) = project(profiles, n_modes, &pieces, panels);
            err = a.iter().zip(&a2).chain(b.iter().zip(&b2)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            a = a2;
            b = b2;
            if err <= PROJECTION_TOL {
                break;
            }
        }
        if err > PROJECTION_TOL {
            return Err(ChainError::Quadrature {
                tol: PROJECTION_TOL,
                err,
            });
        }
        let (constant, constant_breaks): (ScalarFn, _) = match flavor {
            MacroFlavor::Classical => {
                let beta = profiles.beta_fn();
                (
                    std::sync::Arc::new(move |y| 1.0 / beta(y)),
                    profiles.breakpoints().map(|b| b.to_vec()),
                )
            }
            MacroFlavor::Quantum(tab) => (tab.to_fn(), Some(tab.y.clone())),
        };
        Ok(MacroSolver {
            mean_mass,
            n_modes,
            a0: a,
            b0: b,
            constant,
            constant_breaks,
        })
    }

    /// Coefficients `(a_j(t), b_j(t))` after the exact per-mode rotation.
    pub fn coefficients(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let sm = self.mean_mass.sqrt();
        let mut a = vec![0.0; self.n_modes];
        let mut b = vec![self.b0[0]; self.n_modes + 1];
        for j in 1..=self.n_modes {
            let (s, c) = (j as f64 * PI / sm * t).sin_cos();
            a[j - 1] = self.a0[j - 1] * c - self.b0[j] * s / sm;
            b[j] = self.b0[j] * c + sm * self.a0[j - 1] * s;
        }
        (a, b)
    }

    /// `C(y)`, the part of the energy that does not move.
    pub fn slaving_constant(&self, y: f64) -> f64 {
        (self.constant)(y)
    }

    fn eval_with(&self, a: &[f64], b: &[f64], y: f64) -> (f64, f64, f64) {
        let mut r = 0.0;
        let mut p = b[0];
        for j in 1..=self.n_modes {
            r += a[j - 1] * sin_mode(j, y);
            p += b[j] * cos_mode(j, y);
        }
        let e = p * p / (2.0 * self.mean_mass) + r * r / 2.0 + self.slaving_constant(y);
        (r, p, e)
    }

    /// `(r, p, e)` at a single point.
    pub fn eval(&self, y: f64, t: f64) -> (f64, f64, f64) {
        let (a, b) = self.coefficients(t);
        self.eval_with(&a, &b, y)
    }

    pub fn fields(&self, t: f64, grid: usize) -> Result<MacroFields> {
        if grid < 4 {
            return Err(ChainError::InvalidParameter(format!("grid {grid} too coarse")));
        }
        let (a, b) = self.coefficients(t);
        let y: Vec<f64> = (0..=grid).map(|i| i as f64 / grid as f64).collect();
        let mut out = MacroFields {
            t,
            mean_mass: self.mean_mass,
            y: y.clone(),
            r: Vec::with_capacity(grid + 1),
            p: Vec::with_capacity(grid + 1),
            e: Vec::with_capacity(grid + 1),
        };
        for &yy in &y {
            let (r, p, e) = self.eval_with(&a, &b, yy);
            out.r.push(r);
            out.p.push(p);
            out.e.push(e);
        }
        Ok(out)
    }

    /// `int_0^1 f(y) z(y, t) dy`.
    pub fn integrate_against<F: Fn(f64) -> f64>(&self, f: F, field: Field, t: f64, tol: f64) -> Result<f64> {
        let (a, b) = self.coefficients(t);
        let g = |y: f64| {
            let (r, p, e) = self.eval_with(&a, &b, y);
            f(y) * match field {
                Field::R => r,
                Field::P => p,
                Field::E => e,
            }
        };
        let breaks = match field {
            Field::E => self.constant_breaks.as_deref(),
            _ => None,
        };
        quadrature::integrate_pieces(g, breaks, tol).map(|q| q.value)
    }

    /// `sum_j (m_bar a_j^2 + b_j^2)`, conserved by the rotation.
    pub fn mode_norm(&self, t: f64) -> f64 {
        let (a, b) = self.coefficients(t);
        a.iter().map(|a| self.mean_mass * a * a).sum::<f64>() + b[1..].iter().map(|b| b * b).sum::<f64>()
    }
}

pub fn solve_macro(
    profiles: &Profiles,
    mean_mass: f64,
    t: f64,
    n_modes: usize,
    flavor: &MacroFlavor,
    grid: usize,
) -> Result<MacroFields> {
    MacroSolver::new(profiles, mean_mass, n_modes, flavor)?.fields(t, grid)
}

/// Fourth-order first derivative on a uniform grid, one-sided near the ends.
fn derivative(f: &[f64], h: f64) -> Vec<f64> {
    let g = f.len();
    assert!(g >= 5);
    let d = 12.0 * h;
    (0..g)
        .map(|i| match i {
            0 => (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / d,
            1 => (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / d,
            _ if i == g - 2 => {
                (3.0 * f[g - 1] + 10.0 * f[g - 2] - 18.0 * f[g - 3] + 6.0 * f[g - 4] - f[g - 5]) / d
            }
            _ if i == g - 1 => {
                (25.0 * f[g - 1] - 48.0 * f[g - 2] + 36.0 * f[g - 3] - 16.0 * f[g - 4] + 3.0 * f[g - 5]) / d
            }
            _ => (-f[i + 2] + 8.0 * f[i + 1] - 8.0 * f[i - 1] + f[i - 2]) / d,
        })
        .collect()
}

/// Residuals of the Euler system between two snapshots on the same grid:
/// forward difference in time against the trapezoid average of the fluxes.
pub fn pde_residuals(before: &MacroFields, after: &MacroFields) -> Result<Residuals> {
    if before.y != after.y || before.mean_mass != after.mean_mass {
        return Err(ChainError::InvalidParameter("snapshots live on different grids".into()));
    }
    let dt = after.t - before.t;
    if !(dt > 0.0) {
        return Err(ChainError::InvalidParameter(format!("time step {dt} must be positive")));
    }
    let h = before.y[1] - before.y[0];
    let m = before.mean_mass;
    let flux = |f: &MacroFields| {
        let rp: Vec<f64> = f.r.iter().zip(&f.p).map(|(r, p)| r * p).collect();
        (derivative(&f.p, h), derivative(&f.r, h), derivative(&rp, h))
    };
    let (dp0, dr0, de0) = flux(before);
    let (dp1, dr1, de1) = flux(after);
    let mut res = Residuals { r: 0.0, p: 0.0, e: 0.0 };
    for i in 0..before.y.len() {
        let rr = (after.r[i] - before.r[i]) / dt - 0.5 * (dp0[i] + dp1[i]) / m;
        let rp = (after.p[i] - before.p[i]) / dt - 0.5 * (dr0[i] + dr1[i]);
        let re = (after.e[i] - before.e[i]) / dt - 0.5 * (de0[i] + de1[i]) / m;
        res.r = res.r.max(rr.abs());
        res.p = res.p.max(rp.abs());
        res.e = res.e.max(re.abs());
    }
    Ok(res)
}

impl MacroFields {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "y,fr,fp,fe,t")?;
        for i in 0..self.y.len() {
            writeln!(
                w,
                "{:.15e},{:.15e},{:.15e},{:.15e},{:.15e}",
                self.y[i], self.r[i], self.p[i], self.e[i], self.t
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain_model::{sample_profiles, ProfilePreset};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn standing() -> Profiles {
        sample_profiles(&ProfilePreset::CosineMomentum { amplitude: 1.0, beta: 1.0 }).unwrap()
    }

    fn bump() -> Profiles {
        Profiles::from_fns(
            "bump",
            Arc::new(|y| 1.0 + 0.5 * y),
            Arc::new(|y: f64| (-((y - 0.4) / 0.1).powi(2) / 2.0).exp()),
            Arc::new(|y: f64| if y <= 0.0 || y >= 1.0 { 0.0 } else { 0.3 * (PI * y).sin().powi(3) }),
        )
        .unwrap()
    }

    #[test]
    fn standing_wave_closed_form() {
        let s = MacroSolver::new(&standing(), 1.0, 16, &MacroFlavor::Classical).unwrap();
        for t in [0.0, 0.13, 0.5, 1.7] {
            let f = s.fields(t, 256).unwrap();
            for i in 0..f.y.len() {
                let y = f.y[i];
                assert!((f.p[i] - (PI * t).cos() * (PI * y).cos()).abs() < 1e-8);
                assert!((f.r[i] + (PI * t).sin() * (PI * y).sin()).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn boundary_values_are_exact_zeros() {
        let s = MacroSolver::new(&bump(), 1.5, 64, &MacroFlavor::Classical).unwrap();
        for t in [0.0, 0.3, 2.2] {
            let f = s.fields(t, 100).unwrap();
            assert_eq!(f.r[0], 0.0);
            assert_eq!(*f.r.last().unwrap(), 0.0);
        }
    }

    #[test]
    fn residuals_small_on_fine_grid() {
        let s = MacroSolver::new(&bump(), 1.5, 64, &MacroFlavor::Classical).unwrap();
        let t = 0.35;
        let a = s.fields(t, 512).unwrap();
        let b = s.fields(t + 1e-4, 512).unwrap();
        let res = pde_residuals(&a, &b).unwrap();
        assert!(res.max() < 1e-6, "{res:?}");
    }

    #[test]
    fn residuals_converge_under_refinement() {
        let s = MacroSolver::new(&bump(), 1.5, 96, &MacroFlavor::Classical).unwrap();
        let t = 0.2;
        let res = |g| {
            let a = s.fields(t, g).unwrap();
            let b = s.fields(t + 1e-6, g).unwrap();
            pde_residuals(&a, &b).unwrap().max()
        };
        let (coarse, fine) = (res(128), res(256));
        assert!(coarse >= 4.0 * fine, "{coarse} vs {fine}");
    }

    #[test]
    fn slaving_and_momentum() {
        let prof = bump();
        let s = MacroSolver::new(&prof, 1.5, 64, &MacroFlavor::Classical).unwrap();
        let p0 = prof.p_bar_integral();
        for t in [0.0, 0.4, 1.3] {
            let f = s.fields(t, 200).unwrap();
            for i in 0..f.y.len() {
                let c = f.e[i] - f.p[i].powi(2) / 3.0 - f.r[i].powi(2) / 2.0;
                assert!((c - 1.0 / prof.beta(f.y[i])).abs() < 1e-8);
            }
            let pt = s.integrate_against(|_| 1.0, Field::P, t, 1e-12).unwrap();
            assert!((pt - p0).abs() < 1e-10);
        }
    }

    #[test]
    fn quantum_constant_is_used() {
        let y: Vec<f64> = (0..=128).map(|i| i as f64 / 128.0).collect();
        let v: Vec<f64> = y.iter().map(|y| 0.7 + 0.1 * y).collect();
        let tab = Tabulated::new(y, v).unwrap();
        let s = MacroSolver::new(&standing(), 1.0, 8, &MacroFlavor::Quantum(tab)).unwrap();
        // At t = 1: p = -cos(pi y), r = 0.
        let (r, _, e) = s.eval(0.5, 1.0);
        assert!(r.abs() < 1e-12);
        assert!((e - 0.75).abs() < 1e-12);
        let ie = s.integrate_against(|_| 1.0, Field::E, 1.0, 1e-12).unwrap();
        assert!((ie - 1.0).abs() < 1e-10, "{ie}");
    }

    #[test]
    fn csv_layout() {
        let f = solve_macro(&standing(), 1.0, 0.1, 4, &MacroFlavor::Classical, 8).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "y,fr,fp,fe,t");
        assert_eq!(lines.len(), 10);
        assert_eq!(lines[1].split(',').count(), 5);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(MacroSolver::new(&standing(), 0.0, 4, &MacroFlavor::Classical).is_err());
        assert!(MacroSolver::new(&standing(), 1.0, 0, &MacroFlavor::Classical).is_err());
        let s = MacroSolver::new(&standing(), 1.0, 4, &MacroFlavor::Classical).unwrap();
        let a = s.fields(0.1, 16).unwrap();
        let b = s.fields(0.1, 32).unwrap();
        assert!(pde_residuals(&a, &b).is_err());
        assert!(pde_residuals(&a, &a).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn rotation_preserves_mode_norm(amp in -2.0f64..2.0, ramp in -1.0f64..1.0, m in 1.0f64..2.0, t in 0.0f64..10.0) {
            let prof = sample_profiles(&ProfilePreset::MechanicalWave { p_amplitude: amp, r_amplitude: ramp, beta: 1.0 }).unwrap();
            let s = MacroSolver::new(&prof, m, 8, &MacroFlavor::Classical).unwrap();
            let n0 = s.mode_norm(0.0);
            prop_assert!((s.mode_norm(t) - n0).abs() <= 1e-12 * n0.max(1.0));
        }
    }
}
