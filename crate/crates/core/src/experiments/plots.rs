//! Minimal deterministic SVG line plots.

use super::report::ConvergenceReport;
use crate::error::Result;
use log::info;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN: f64 = 64.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub markers: bool,
    pub dashed: bool,
}

impl Series {
    pub fn line(name: impl Into<String>, xs: Vec<f64>, ys: Vec<f64>) -> Self {
        Series {
            name: name.into(),
            xs,
            ys,
            markers: false,
            dashed: false,
        }
    }

    pub fn points(name: impl Into<String>, xs: Vec<f64>, ys: Vec<f64>) -> Self {
        Series {
            markers: true,
            ..Series::line(name, xs, ys)
        }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

#[derive(Clone, Debug)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str, log_x: bool, log_y: bool) -> Self {
        Plot {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_x,
            log_y,
            series: Vec::new(),
        }
    }

    fn tx(&self, v: f64) -> f64 {
        if self.log_x {
            v.log10()
        } else {
            v
        }
    }

    fn ty(&self, v: f64) -> f64 {
        if self.log_y {
            v.log10()
        } else {
            v
        }
    }

    fn usable(&self, x: f64, y: f64) -> bool {
        x.is_finite() && y.is_finite() && (!self.log_x || x > 0.0) && (!self.log_y || y > 0.0)
    }

    /// SVG text, or `None` when no series has a drawable point.
    pub fn render(&self) -> Option<String> {
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.xs.iter().zip(&s.ys).map(|(&x, &y)| (x, y)))
            .filter(|&(x, y)| self.usable(x, y))
            .map(|(x, y)| (self.tx(x), self.ty(y)))
            .collect();
        if pts.is_empty() {
            return None;
        }
        let (mut x0, mut x1, mut y0, mut y1) = pts.iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
        );
        if x1 - x0 < 1e-12 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 - y0 < 1e-12 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let pad = 0.05 * (y1 - y0);
        y0 -= pad;
        y1 += pad;
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
        let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN}" y="{MARGIN}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
            WIDTH - 2.0 * MARGIN,
            HEIGHT - 2.0 * MARGIN
        );
        for i in 0..=4 {
            let fx = x0 + (x1 - x0) * i as f64 / 4.0;
            let fy = y0 + (y1 - y0) * i as f64 / 4.0;
            let lx = if self.log_x { 10f64.powf(fx) } else { fx };
            let ly = if self.log_y { 10f64.powf(fy) } else { fy };
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.3e}</text>"#,
                sx(fx),
                HEIGHT - MARGIN + 16.0,
                lx
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.3e}</text>"#,
                MARGIN - 4.0,
                sy(fy) + 4.0,
                ly
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 16.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(&self.y_label)
        );
        for (i, ser) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let coords: Vec<(f64, f64)> = ser
                .xs
                .iter()
                .zip(&ser.ys)
                .filter(|(&x, &y)| self.usable(x, y))
                .map(|(&x, &y)| (sx(self.tx(x)), sy(self.ty(y))))
                .collect();
            if coords.is_empty() {
                continue;
            }
            let path: Vec<String> = coords.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let dash = if ser.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                path.join(" ")
            );
            if ser.markers {
                for (x, y) in &coords {
                    let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
                }
            }
            let ly = MARGIN + 16.0 + 16.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"{dash}/>"#,
                WIDTH - MARGIN - 150.0,
                WIDTH - MARGIN - 130.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
                WIDTH - MARGIN - 125.0,
                ly + 4.0,
                escape(&ser.name)
            );
        }
        s.push_str("</svg>\n");
        Some(s)
    }
}

fn file_safe(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

/// Builds every plot for `report`; empty classes are skipped.
pub fn build_plots(report: &ConvergenceReport) -> Vec<(String, Plot)> {
    let mut out = Vec::new();

    // Convergence: one plot per (experiment, t, f, metric class).
    let mut groups: BTreeMap<String, Plot> = BTreeMap::new();
    for (key, fit) in &report.fits {
        let parts: Vec<&str> = key.split('/').collect();
        if parts.len() != 4 {
            continue;
        }
        let (exp, metric, f, t) = (parts[0], parts[1], parts[2], parts[3]);
        let class = metric.rsplit_once('_').map_or(metric, |(c, _)| c);
        let name = format!("convergence_{exp}_{class}_{f}_{t}");
        let plot = groups.entry(name).or_insert_with(|| {
            Plot::new(&format!("{exp}: {class} ({f}, {t})"), "n", class, true, true)
        });
        let xs = fit.ns.iter().map(|&n| n as f64).collect();
        plot.series.push(Series::points(format!("{metric} slope {:.2}", fit.slope), xs, fit.values.clone()));
    }
    out.extend(groups);

    // Localization: one decay plot per alpha, every n and the clean control.
    let mut decay: BTreeMap<String, Plot> = BTreeMap::new();
    for c in &report.decay {
        let name = format!("localization_alpha={}", c.alpha);
        let plot = decay.entry(name).or_insert_with(|| {
            Plot::new(&format!("high-mode correlator, alpha = {}", c.alpha), "distance", "S(d)", false, true)
        });
        let xs: Vec<f64> = c.distances.iter().map(|&d| d as f64).collect();
        plot.series.push(Series::points(format!("{} n={}", c.label, c.n), xs, c.correlator.clone()));
        if c.fit_slope.is_finite() {
            let fx = vec![c.window.0, c.window.1];
            let fy = fx.iter().map(|x| (c.fit_intercept + c.fit_slope * x).exp()).collect();
            plot.series.push(Series::line(format!("fit n={} r={:.3}", c.n, c.fit_r), fx, fy).dashed());
        }
    }
    out.extend(decay);

    for o in &report.overlays {
        let mut plot = Plot::new(
            &format!("{}: momentum at t = {} (n = {}, seed {})", o.experiment, o.t, o.n, o.seed),
            "y",
            o.field.as_str(),
            false,
            false,
        );
        plot.series.push(Series::points("microscopic (window mean)", o.y.clone(), o.micro.clone()));
        plot.series.push(Series::line("macroscopic", o.y.clone(), o.macro_values.clone()));
        out.push((format!("overlay_{}_n={}_t={}", o.experiment, o.n, o.t), plot));
    }

    for f in &report.fields {
        let mut plot = Plot::new(&format!("macroscopic fields at t = {}", f.t), "y", "value", false, false);
        plot.series.push(Series::line("r", f.y.clone(), f.r.clone()));
        plot.series.push(Series::line("p", f.y.clone(), f.p.clone()));
        plot.series.push(Series::line("e", f.y.clone(), f.e.clone()));
        out.push((format!("euler_t={}", f.t), plot));
    }
    out
}

/// Writes the SVG files into `dir` and returns their paths.
pub fn emit_plots(report: &ConvergenceReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let plots = build_plots(report);
    if plots.is_empty() {
        info!("report has no plottable metric class; no plots written");
    }
    let mut paths = Vec::new();
    for (name, plot) in plots {
        match plot.render() {
            Some(svg) => {
                let path = dir.join(format!("{}.svg", file_safe(&name)));
                std::fs::write(&path, svg)?;
                paths.push(path);
            }
            None => info!("plot {name} has no drawable points; omitted"),
        }
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_is_deterministic_and_skips_empty() {
        let mut p = Plot::new("t", "x", "y", true, true);
        p.series.push(Series::points("a", vec![1.0, 10.0, 100.0], vec![1.0, 0.1, 0.01]));
        let a = p.render().unwrap();
        assert_eq!(a, p.render().unwrap());
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert_eq!(a.matches("<circle").count(), 3);
        let mut empty = Plot::new("t", "x", "y", true, true);
        empty.series.push(Series::line("neg", vec![1.0], vec![-1.0]));
        assert!(empty.render().is_none());
    }

    #[test]
    fn names_are_file_safe() {
        assert_eq!(file_safe("a/b c=1.5"), "a_b_c_1.5");
    }
}
