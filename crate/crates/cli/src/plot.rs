//! Minimal standalone SVG line plots.

use std::fmt::Write as _;
use std::path::Path;

use choquard::bubbles::linear_fit;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    /// Objective per iteration, linear axes.
    Trace,
    /// Log-log scatter with the least-squares line and its slope.
    RateFit,
    /// `(|x|, u)` samples, linear axes.
    RadialProfile,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 60.0;

/// Slope and intercept of `ln y` against `ln x` over the positive points.
pub fn loglog_fit(series: &[(f64, f64)]) -> Option<(f64, f64)> {
    let (x, y): (Vec<f64>, Vec<f64>) = series
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .unzip();
    if x.len() < 2 {
        return None;
    }
    let (slope, intercept, _) = linear_fit(&x, &y);
    slope.is_finite().then_some((slope, intercept))
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            let v = if log { v.ln() } else { v };
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo <= 1e-12 * (1.0 + lo.abs()) {
            lo -= 0.5;
            hi += 0.5;
        }
        Self { lo, hi, log }
    }

    fn frac(&self, v: f64) -> f64 {
        let v = if self.log { v.ln() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn label(&self, t: f64) -> String {
        let v = self.lo + t * (self.hi - self.lo);
        let v = if self.log { v.exp() } else { v };
        format!("{v:.3e}")
    }
}

/// Render `series` as an SVG document.
pub fn render_plot(series: &[(f64, f64)], kind: PlotKind, title: &str) -> Result<String, CliError> {
    if series.is_empty() {
        return Err(CliError::Config("cannot plot an empty series".into()));
    }
    let log = kind == PlotKind::RateFit;
    let pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|&(x, y)| x.is_finite() && y.is_finite() && (!log || (x > 0.0 && y > 0.0)))
        .collect();
    let ax = Axis::new(pts.iter().map(|p| p.0), log);
    let ay = Axis::new(pts.iter().map(|p| p.1), log);
    let px = |x: f64| MARGIN + ax.frac(x) * (W - 2.0 * MARGIN);
    let py = |y: f64| H - MARGIN - ay.frac(y) * (H - 2.0 * MARGIN);
    let (xlabel, ylabel) = match kind {
        PlotKind::Trace => ("iteration", "objective"),
        PlotKind::RateFit => ("epsilon", "deficit"),
        PlotKind::RadialProfile => ("|x|", "u"),
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let (x0, x1, y0, y1) = (MARGIN, W - MARGIN, H - MARGIN, MARGIN);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let gx = x0 + t * (x1 - x0);
        let gy = y0 - t * (y0 - y1);
        let _ = writeln!(s, r#"<line x1="{gx}" y1="{y0}" x2="{gx}" y2="{}" stroke="black"/>"#, y0 + 5.0);
        let _ = writeln!(s, r#"<text x="{gx}" y="{}" text-anchor="middle">{}</text>"#, y0 + 18.0, ax.label(t));
        let _ = writeln!(s, r#"<line x1="{}" y1="{gy}" x2="{x0}" y2="{gy}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, x0 - 8.0, gy + 4.0, ay.label(t));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#, W / 2.0, H - 16.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{ylabel}</text>"#,
        H / 2.0,
        H / 2.0
    );

    if kind == PlotKind::Trace && pts.len() > 1 {
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#, path.join(" "));
    }
    for &(x, y) in &pts {
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#, px(x), py(y));
    }
    if kind == PlotKind::RateFit {
        if let Some((slope, intercept)) = loglog_fit(&pts) {
            let xa = ax.lo.exp();
            let xb = ax.hi.exp();
            let f = |x: f64| (intercept + slope * x.ln()).exp();
            let _ = writeln!(
                s,
                r#"<line class="fit" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="firebrick" stroke-dasharray="6 3"/>"#,
                px(xa),
                py(f(xa)),
                px(xb),
                py(f(xb))
            );
            let _ = writeln!(
                s,
                r#"<text class="slope" x="{}" y="{}" fill="firebrick">slope = {slope:.3}</text>"#,
                x0 + 10.0,
                y1 + 16.0
            );
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_plot(series: &[(f64, f64)], kind: PlotKind, path: &Path) -> Result<(), CliError> {
    let title = path.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
    let svg = render_plot(series, kind, title)?;
    std::fs::write(path, svg)?;
    Ok(())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
