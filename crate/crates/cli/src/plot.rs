//! Self-contained SVG plots: inline styles, no scripts. They are
//! illustrative only; the CSV traces carry the numbers.

use std::fmt::Write;

use bearing_forms::{FormationGraph, SimTrace, Trajectory};
use nalgebra::DVector;

const W: f64 = 720.0;
const H: f64 = 480.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
/// Points kept per polyline.
const MAX_POINTS: usize = 1500;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = (f64, f64)>, equal_aspect: bool) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for (x, y) in points.filter(|(x, y)| x.is_finite() && y.is_finite()) {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        let pad = |a: f64, b: f64| {
            if b - a < 1e-12 {
                (a - 0.5, b + 0.5)
            } else {
                (a, b)
            }
        };
        let (mut x0, mut x1) = pad(x0, x1);
        let (mut y0, mut y1) = pad(y0, y1);
        if equal_aspect {
            let sx = (x1 - x0) / (W - 2.0 * MARGIN);
            let sy = (y1 - y0) / (H - 2.0 * MARGIN);
            let s = sx.max(sy) * 1.05;
            let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
            x0 = cx - s * (W - 2.0 * MARGIN) / 2.0;
            x1 = cx + s * (W - 2.0 * MARGIN) / 2.0;
            y0 = cy - s * (H - 2.0 * MARGIN) / 2.0;
            y1 = cy + s * (H - 2.0 * MARGIN) / 2.0;
        }
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * MARGIN)
    }
}

fn open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{W}" height="{H}" style="fill:#ffffff"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" style="font:15px sans-serif;text-anchor:middle">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn polyline(s: &mut String, pts: &[(f64, f64)], style: &str) {
    if pts.len() < 2 {
        return;
    }
    let stride = pts.len().div_ceil(MAX_POINTS).max(1);
    let mut body = String::new();
    for (k, (x, y)) in pts.iter().enumerate() {
        if k % stride == 0 || k + 1 == pts.len() {
            let _ = write!(body, "{x:.2},{y:.2} ");
        }
    }
    let _ = writeln!(
        s,
        r#"<polyline points="{}" style="fill:none;{style}"/>"#,
        body.trim_end()
    );
}

fn axes(s: &mut String, f: &Frame, xlabel: &str, ylabel: &str, ylog: bool) {
    let (l, r, t, b) = (MARGIN, W - MARGIN, MARGIN, H - MARGIN);
    let _ = writeln!(
        s,
        r#"<rect x="{l}" y="{t}" width="{}" height="{}" style="fill:none;stroke:#444;stroke-width:1"/>"#,
        r - l,
        b - t
    );
    for k in 0..=4 {
        let xv = f.x0 + (f.x1 - f.x0) * k as f64 / 4.0;
        let x = f.px(xv);
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" style="font:11px sans-serif;text-anchor:middle">{}</text>"#,
            b + 16.0,
            tick(xv)
        );
    }
    if ylog {
        let (lo, hi) = (f.y0.ceil() as i32, f.y1.floor() as i32);
        let step = ((hi - lo) / 8).max(1);
        for e in (lo..=hi).step_by(step as usize) {
            let y = f.py(e as f64);
            let _ = writeln!(
                s,
                r#"<line x1="{l}" y1="{y:.1}" x2="{r}" y2="{y:.1}" style="stroke:#ddd;stroke-width:1"/>"#
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" style="font:11px sans-serif;text-anchor:end">1e{e}</text>"#,
                l - 6.0,
                y + 4.0
            );
        }
    } else {
        for k in 0..=4 {
            let yv = f.y0 + (f.y1 - f.y0) * k as f64 / 4.0;
            let y = f.py(yv);
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" style="font:11px sans-serif;text-anchor:end">{}</text>"#,
                l - 6.0,
                y + 4.0,
                tick(yv)
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" style="font:12px sans-serif;text-anchor:middle">{}</text>"#,
        W / 2.0,
        H - 18.0,
        escape(xlabel)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" transform="rotate(-90 16 {})" style="font:12px sans-serif;text-anchor:middle">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
}

fn tick(v: f64) -> String {
    let r = (v * 100.0).round() / 100.0;
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}

fn legend(s: &mut String, entries: &[(&str, &str)]) {
    for (k, (label, color)) in entries.iter().enumerate() {
        let y = MARGIN + 16.0 + 18.0 * k as f64;
        let x = W - MARGIN - 130.0;
        let _ = writeln!(
            s,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" style="stroke:{color};stroke-width:2"/>"#,
            x + 24.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" style="font:12px sans-serif">{}</text>"#,
            x + 30.0,
            y + 4.0,
            escape(label)
        );
    }
}

/// Error norms against time on a log scale.
pub fn error_plot(trace: &SimTrace, title: &str) -> String {
    let floor = 1e-16f64;
    let mut series: Vec<(&str, &[f64])> = vec![("‖p̃‖", &trace.err_p), ("‖δ‖", &trace.err_delta)];
    if trace.err_v.iter().any(|&v| v > 0.0) {
        series.push(("‖ṽ‖", &trace.err_v));
    }
    let logs: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|(_, ys)| {
            trace
                .t
                .iter()
                .zip(ys.iter())
                .map(|(&t, &y)| (t, y.max(floor).log10()))
                .collect()
        })
        .collect();
    let mut f = Frame::fit(logs.iter().flatten().copied(), false);
    f.y0 = f.y0.floor();
    f.y1 = f.y1.ceil().max(f.y0 + 1.0);
    let mut s = open(title);
    axes(&mut s, &f, "t [s]", "error norm", true);
    let mut entries = Vec::new();
    for (k, ((label, _), pts)) in series.iter().zip(&logs).enumerate() {
        let px: Vec<(f64, f64)> = pts.iter().map(|&(t, y)| (f.px(t), f.py(y))).collect();
        polyline(
            &mut s,
            &px,
            &format!("stroke:{};stroke-width:1.6", COLORS[k]),
        );
        entries.push((*label, COLORS[k]));
    }
    legend(&mut s, &entries);
    s.push_str("</svg>\n");
    s
}

/// Plane coordinates of one agent: identity in 2-D, an oblique view in 3-D.
fn project(p: &DVector<f64>, i: usize, d: usize) -> (f64, f64) {
    let c = |k: usize| if k < d { p[i * d + k] } else { 0.0 };
    if d <= 2 {
        (c(0), c(1))
    } else {
        let (cos, sin) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
        ((c(0) - c(1)) * cos, c(2) + (c(0) + c(1)) * sin)
    }
}

fn formation(s: &mut String, f: &Frame, g: &FormationGraph, p: &DVector<f64>, actual: bool) {
    let d = g.d();
    let dash = if actual { "" } else { "stroke-dasharray:4 3;" };
    for e in g.edges() {
        let (a, b) = (project(p, e.tail, d), project(p, e.head, d));
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" style="stroke:#555;stroke-width:1;{dash}"/>"#,
            f.px(a.0),
            f.py(a.1),
            f.px(b.0),
            f.py(b.1)
        );
    }
    for i in 0..g.n() {
        let (x, y) = project(p, i, d);
        let color = COLORS[i % COLORS.len()];
        if actual {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="4" style="fill:{color};stroke:#000;stroke-width:0.6"/>"#,
                f.px(x),
                f.py(y)
            );
        } else {
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="8" height="8" style="fill:none;stroke:{color};stroke-width:1.2"/>"#,
                f.px(x) - 4.0,
                f.py(y) - 4.0
            );
        }
    }
}

/// Agent paths with actual (dots) and desired (squares, dashed edges)
/// formations at `snapshots` evenly spaced recorded times.
pub fn trajectory_plot(
    trace: &SimTrace,
    g: &FormationGraph,
    desired: &dyn Trajectory,
    snapshots: usize,
    title: &str,
) -> String {
    let d = g.d();
    let n = g.n();
    let desired_at: Vec<Option<DVector<f64>>> =
        trace.t.iter().map(|&t| desired.positions(t).ok()).collect();
    let all = trace
        .positions
        .iter()
        .chain(desired_at.iter().flatten())
        .flat_map(|p| (0..n).map(move |i| project(p, i, d)));
    let f = Frame::fit(all, true);
    let mut s = open(title);
    axes(
        &mut s,
        &f,
        if d <= 2 {
            "x"
        } else {
            "oblique view (x, y, z)"
        },
        if d <= 2 { "y" } else { "" },
        false,
    );
    for i in 0..n {
        let pts: Vec<(f64, f64)> = trace
            .positions
            .iter()
            .map(|p| {
                let (x, y) = project(p, i, d);
                (f.px(x), f.py(y))
            })
            .collect();
        polyline(
            &mut s,
            &pts,
            &format!(
                "stroke:{};stroke-width:1.2;opacity:0.8",
                COLORS[i % COLORS.len()]
            ),
        );
    }
    if !trace.is_empty() {
        let last = trace.len() - 1;
        let count = snapshots.max(1);
        let mut picks: Vec<usize> = (0..count)
            .map(|k| {
                if count == 1 {
                    last
                } else {
                    k * last / (count - 1)
                }
            })
            .collect();
        picks.dedup();
        for k in picks {
            if let Some(p) = &desired_at[k] {
                formation(&mut s, &f, g, p, false);
            }
            formation(&mut s, &f, g, &trace.positions[k], true);
            let (x, y) = project(&trace.positions[k], 0, d);
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" style="font:10px sans-serif">t={}</text>"#,
                f.px(x) + 6.0,
                f.py(y) - 6.0,
                tick(trace.t[k])
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
