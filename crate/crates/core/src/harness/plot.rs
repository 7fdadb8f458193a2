//! Dependency-free SVG line charts.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axes {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const N_TICKS: usize = 5;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e9 {
        format!("{v:.0}")
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.3e}")
    } else {
        format!("{v:.3}")
    }
}

/// Evenly spaced tick values whose first and last entries are the data extremes.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    if lo == hi {
        return vec![lo];
    }
    (0..N_TICKS).map(|i| if i + 1 == N_TICKS { hi } else { lo + (hi - lo) * i as f64 / (N_TICKS - 1) as f64 }).collect()
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Renders `series` as a standalone SVG document. `source_csv` names the
/// file holding the plotted numbers and is embedded as a comment.
pub fn emit_plot(series: &[Series], axes: &Axes, source_csv: &str) -> Result<String> {
    if series.is_empty() || series.iter().all(|s| s.x.is_empty()) {
        return Err(Error::Input("nothing to plot".into()));
    }
    for s in series {
        if s.x.len() != s.y.len() {
            return Err(Error::Shape(format!(
                "series {:?} has {} x values and {} y values",
                s.label,
                s.x.len(),
                s.y.len()
            )));
        }
        if s.x.iter().chain(&s.y).any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("series {:?} holds a non-finite value", s.label)));
        }
    }
    let (x_lo, x_hi) = extent(series.iter().flat_map(|s| s.x.iter().copied()));
    let (y_lo, y_hi) = extent(series.iter().flat_map(|s| s.y.iter().copied()));
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| if x_hi > x_lo { LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w } else { LEFT + plot_w / 2.0 };
    let sy = |y: f64| if y_hi > y_lo { TOP + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h } else { TOP + plot_h / 2.0 };

    let mut svg = String::new();
    writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(svg, "<!-- source: {} -->", source_csv.replace("--", "- -")).unwrap();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(svg, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, LEFT + plot_w / 2.0, escape(&axes.title)).unwrap();
    writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    )
    .unwrap();

    for v in ticks(x_lo, x_hi) {
        let x = sx(v);
        writeln!(svg, r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/>"#, TOP + plot_h, TOP + plot_h + 5.0).unwrap();
        writeln!(
            svg,
            r#"<text class="tick-x" data-value="{v}" x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#,
            TOP + plot_h + 18.0,
            tick_label(v)
        )
        .unwrap();
    }
    for v in ticks(y_lo, y_hi) {
        let y = sy(v);
        writeln!(svg, r#"<line x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0).unwrap();
        writeln!(
            svg,
            r#"<text class="tick-y" data-value="{v}" x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 8.0,
            y + 4.0,
            tick_label(v)
        )
        .unwrap();
    }
    writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 16.0,
        escape(&axes.x_label)
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="20" y="{0}" text-anchor="middle" transform="rotate(-90 20 {0})">{1}</text>"#,
        TOP + plot_h / 2.0,
        escape(&axes.y_label)
    )
    .unwrap();

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = s.x.iter().zip(&s.y).map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"><title>{}</title></polyline>"#,
            points.join(" "),
            escape(&s.label)
        )
        .unwrap();
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        writeln!(svg, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 24.0).unwrap();
        writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, lx + 30.0, ly + 4.0, escape(&s.label)).unwrap();
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
