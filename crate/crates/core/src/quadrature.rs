//! Composite Gauss–Legendre quadrature.

use crate::error::{ChainError, Result};
use std::sync::OnceLock;

/// Nodes and weights of the `order`-point rule on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..(order + 1) / 2 {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(order, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(order, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

const ORDER: usize = 16;

fn rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(ORDER))
}

/// Composite rule with `panels` equal panels on `[a, b]`.
pub fn composite<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, panels: usize) -> f64 {
    let (x, w) = rule();
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for j in 0..panels {
        let mid = a + (j as f64 + 0.5) * h;
        let mut s = 0.0;
        for (xi, wi) in x.iter().zip(w) {
            s += wi * f(mid + 0.5 * h * xi);
        }
        total += 0.5 * h * s;
    }
    total
}

#[derive(Clone, Copy, Debug)]
pub struct Quad {
    pub value: f64,
    /// Change between the last two panel refinements.
    pub error: f64,
    pub panels: usize,
}

/// Doubles the panel count until successive estimates agree to `tol * max(1, |I|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<Quad> {
    let mut panels = 4;
    let mut prev = composite(&f, a, b, panels);
    let mut err = f64::INFINITY;
    while panels < 1 << 14 {
        panels *= 2;
        let next = composite(&f, a, b, panels);
        err = (next - prev).abs();
        if err <= tol * next.abs().max(1.0) {
            return Ok(Quad {
                value: next,
                error: err,
                panels,
            });
        }
        prev = next;
    }
    Err(ChainError::Quadrature { tol, err })
}

/// Like [`integrate`] on `[0, 1]`, but with panels aligned to `breakpoints`
/// so that piecewise-smooth integrands converge at the smooth rate.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: F, breakpoints: Option<&[f64]>, tol: f64) -> Result<Quad> {
    let Some(bp) = breakpoints else {
        return integrate(f, 0.0, 1.0, tol);
    };
    let mut value = 0.0;
    let mut error: f64 = 0.0;
    let mut panels = 0;
    for w in bp.windows(2) {
        let q = integrate(&f, w[0], w[1], tol)?;
        value += q.value;
        error = error.max(q.error);
        panels += q.panels;
    }
    Ok(Quad { value, error, panels })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(ORDER);
        for deg in 0..(2 * ORDER) {
            let num: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((num - exact).abs() < 1e-14, "degree {deg}: {num} vs {exact}");
        }
    }

    #[test]
    fn smooth_integrals() {
        let q = integrate(|y: f64| (std::f64::consts::PI * y).sin(), 0.0, 1.0, 1e-12).unwrap();
        assert!((q.value - 2.0 / std::f64::consts::PI).abs() < 1e-14);
        let q = integrate(|y: f64| (-y * y).exp(), -3.0, 3.0, 1e-12).unwrap();
        assert!((q.value - 1.7724146965190428).abs() < 1e-12);
    }
}
