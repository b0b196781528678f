//! Dependency-free SVG figures.
//!
//! Heatmaps use a sampled viridis colormap, linearly interpolated between
//! nine anchors. Its luminance increases monotonically from dark purple
//! (map minimum) to yellow (map maximum).

use std::fmt::Write;
use std::path::Path;

use crate::error::{Result, VipError};
use crate::tensor::Tensor;

const VIRIDIS: [[u8; 3]; 9] = [
    [68, 1, 84],
    [71, 44, 122],
    [59, 81, 139],
    [44, 113, 142],
    [33, 144, 141],
    [39, 173, 129],
    [92, 200, 99],
    [170, 220, 50],
    [253, 231, 37],
];

const CELL: usize = 16;

/// Color for `t` in `[0, 1]` (clamped).
pub fn colormap(t: f64) -> [u8; 3] {
    let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
    let pos = t * (VIRIDIS.len() - 1) as f64;
    let lo = (pos.floor() as usize).min(VIRIDIS.len() - 2);
    let f = pos - lo as f64;
    let mut out = [0u8; 3];
    for c in 0..3 {
        let a = VIRIDIS[lo][c] as f64;
        let b = VIRIDIS[lo + 1][c] as f64;
        out[c] = (a + (b - a) * f).round() as u8;
    }
    out
}

fn hex([r, g, b]: [u8; 3]) -> String {
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Heatmap of a `[p1, p2]` map, one `<rect>` per cell, scaled over `[min, max]`.
pub fn render_attention_svg(map: &Tensor) -> Result<String> {
    if map.rank() != 2 {
        return Err(VipError::invalid(format!(
            "attention map must be [p1, p2], got {:?}",
            map.shape()
        )));
    }
    let (rows, cols) = map.dims2()?;
    if map.data().iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(VipError::invalid("attention map entries must be finite and nonnegative"));
    }
    let lo = map.data().iter().copied().fold(f32::INFINITY, f32::min) as f64;
    let hi = map.data().iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let span = hi - lo;
    let (w, h) = (cols * CELL, rows * CELL);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" shape-rendering="crispEdges">"#
    );
    let _ = writeln!(s, "<desc>min={lo:e} max={hi:e}</desc>");
    for y in 0..rows {
        for x in 0..cols {
            let v = map.data()[y * cols + x] as f64;
            let t = if span > 0.0 { (v - lo) / span } else { 0.0 };
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="{}"/>"#,
                x * CELL,
                y * CELL,
                hex(colormap(t))
            );
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn render_attention_map(map: &Tensor, out: &Path) -> Result<()> {
    let svg = render_attention_svg(map)?;
    std::fs::write(out, svg).map_err(|e| VipError::io(out, e))
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 300.0;
const MARGIN: f64 = 40.0;

fn frame(s: &mut String, title: &str, lo: f64, hi: f64) {
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="20">{}</text>"#, escape(title));
    let (x0, y0, x1, y1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN / 2.0, MARGIN);
    let _ = writeln!(
        s,
        r#"<path d="M{x0} {y1}V{y0}H{x1}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(s, r#"<text x="4" y="{}">{}</text>"#, y0, fmt_tick(lo));
    let _ = writeln!(s, r#"<text x="4" y="{}">{}</text>"#, y1 + 4.0, fmt_tick(hi));
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn value_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    lo = lo.min(0.0);
    if hi <= lo {
        hi = lo + 1.0;
    }
    (lo, hi)
}

/// Line chart of several series over a shared integer x axis; missing points break the line.
pub fn render_line_chart(title: &str, series: &[(String, Vec<Option<f64>>)]) -> String {
    let n = series.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    let (lo, hi) = value_range(series.iter().flat_map(|(_, v)| v.iter().flatten().copied()));
    let mut s = String::new();
    frame(&mut s, title, lo, hi);
    let sx = |i: usize| MARGIN + (WIDTH - 1.5 * MARGIN) * if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
    let sy = |v: f64| (HEIGHT - MARGIN) - (HEIGHT - 2.0 * MARGIN) * (v - lo) / (hi - lo);
    for (k, (name, values)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        for run in values
            .iter()
            .enumerate()
            .collect::<Vec<_>>()
            .split(|(_, v)| v.is_none())
        {
            if run.is_empty() {
                continue;
            }
            let pts: Vec<String> = run
                .iter()
                .map(|(i, v)| format!("{:.2},{:.2}", sx(*i), sy(v.unwrap())))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                pts.join(" ")
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            WIDTH - 150.0,
            MARGIN + 14.0 * k as f64,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Grouped bar chart: one group per category, one bar per series.
pub fn render_bar_chart(title: &str, categories: &[String], series: &[(String, Vec<f64>)]) -> String {
    let (lo, hi) = value_range(series.iter().flat_map(|(_, v)| v.iter().copied()));
    let mut s = String::new();
    frame(&mut s, title, lo, hi);
    let groups = categories.len().max(1) as f64;
    let group_w = (WIDTH - 1.5 * MARGIN) / groups;
    let bar_w = group_w * 0.8 / series.len().max(1) as f64;
    let sy = |v: f64| (HEIGHT - MARGIN) - (HEIGHT - 2.0 * MARGIN) * (v - lo) / (hi - lo);
    for (k, (name, values)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        for (i, &v) in values.iter().enumerate().filter(|(_, v)| v.is_finite()) {
            let x = MARGIN + group_w * (i as f64 + 0.1) + bar_w * k as f64;
            let (top, base) = (sy(v.max(0.0)), sy(v.min(0.0)));
            let _ = writeln!(
                s,
                r#"<rect x="{x:.2}" y="{top:.2}" width="{bar_w:.2}" height="{:.2}" fill="{color}"/>"#,
                base - top
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            WIDTH - 150.0,
            MARGIN + 14.0 * k as f64,
            escape(name)
        );
    }
    for (i, c) in categories.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            MARGIN + group_w * (i as f64 + 0.5),
            HEIGHT - MARGIN + 14.0,
            escape(c)
        );
    }
    s.push_str("</svg>\n");
    s
}
