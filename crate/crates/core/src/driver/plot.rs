//! Log-log convergence plots as standalone SVG.

use std::fmt::Write as _;
use std::path::Path;

use super::trace::{AfemTrace, TraceField};
use crate::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 70.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Axis limits in data units; decade-aligned so they envelope every point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlotBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

fn collect(trace: &AfemTrace, x: TraceField, series: &[TraceField]) -> Vec<Series> {
    let xs = trace.values(x);
    series
        .iter()
        .map(|f| Series {
            label: f.label(),
            points: xs
                .iter()
                .zip(trace.values(*f))
                .filter_map(|(a, b)| match (a, b) {
                    (Some(a), Some(b)) if *a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() => Some((*a, b)),
                    _ => None,
                })
                .collect(),
        })
        .filter(|s| !s.points.is_empty())
        .collect()
}

fn bounds_of(series: &[Series]) -> Result<PlotBounds> {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return Err(Error::InvalidArgument("nothing to plot".into()));
    }
    let lo = |v: f64| 10f64.powf(v.log10().floor());
    let hi = |v: f64, l: f64| 10f64.powf(v.log10().ceil()).max(l * 10.0);
    Ok(PlotBounds {
        x_min: lo(x0),
        x_max: hi(x1, lo(x0)),
        y_min: lo(y0),
        y_max: hi(y1, lo(y0)),
    })
}

/// Axis limits `emit_plot_series` would use.
pub fn plot_bounds(trace: &AfemTrace, x: TraceField, series: &[TraceField]) -> Result<PlotBounds> {
    bounds_of(&collect(trace, x, series))
}

/// Default plot: η², osc² and (when recorded) gap² against DOFs, with a guide
/// of slope −k.
pub fn emit_plot(trace: &AfemTrace, path: impl AsRef<Path>) -> Result<()> {
    let mut series = vec![TraceField::Eta2, TraceField::Osc2];
    if trace.rows.iter().any(|r| r.gap2.is_some()) {
        series.push(TraceField::Gap2);
    }
    emit_plot_series(trace, path, TraceField::Dofs, &series, Some(-(trace.degree as f64)))
}

pub fn emit_plot_series(trace: &AfemTrace, path: impl AsRef<Path>, x: TraceField, series: &[TraceField], guide_slope: Option<f64>) -> Result<()> {
    std::fs::write(path, render(trace, x, series, guide_slope)?)?;
    Ok(())
}

pub fn render(trace: &AfemTrace, x: TraceField, series: &[TraceField], guide_slope: Option<f64>) -> Result<String> {
    let data = collect(trace, x, series);
    let b = bounds_of(&data)?;
    let (lx0, lx1, ly0, ly1) = (b.x_min.log10(), b.x_max.log10(), b.y_min.log10(), b.y_max.log10());
    let px = |v: f64| MARGIN + (v.log10() - lx0) / (lx1 - lx0) * (WIDTH - 2.0 * MARGIN);
    let py = |v: f64| HEIGHT - MARGIN - (v.log10() - ly0) / (ly1 - ly0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<defs><clipPath id="frame"><rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}"/></clipPath></defs>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let _ = writeln!(
        s,
        r#"<g id="axes" data-x-min="{:e}" data-x-max="{:e}" data-y-min="{:e}" data-y-max="{:e}" stroke="black" fill="none">"#,
        b.x_min, b.x_max, b.y_min, b.y_max
    );
    let _ = writeln!(s, r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}"/>"#, WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g font-family="sans-serif" font-size="12" fill="black">"#);
    for e in (lx0 as i32)..=(lx1 as i32) {
        let x = px(10f64.powi(e));
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{0}" x2="{x:.2}" y2="{1}" stroke="black"/>"#, HEIGHT - MARGIN, HEIGHT - MARGIN + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">1e{e}</text>"#, HEIGHT - MARGIN + 20.0);
    }
    for e in (ly0 as i32)..=(ly1 as i32) {
        let y = py(10f64.powi(e));
        let _ = writeln!(s, r#"<line x1="{0}" y1="{y:.2}" x2="{MARGIN}" y2="{y:.2}" stroke="black"/>"#, MARGIN - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">1e{e}</text>"#, MARGIN - 8.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 20.0, x.label());
    let _ = writeln!(s, "</g>");

    for (i, ser) in data.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = ser.points.iter().map(|&(a, b)| format!("{:.2},{:.2}", px(a), py(b))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#, pts.join(" "), ser.label);
        let ly = MARGIN + 18.0 * (i as f64 + 1.0);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#,
            WIDTH - MARGIN - 110.0,
            ser.label
        );
    }

    if let (Some(slope), Some(first)) = (guide_slope, data.first()) {
        // anchored above the first point of the first series, clipped to the frame
        let (x0, y0) = first.points[0];
        let (x1, _) = *first.points.last().unwrap();
        let ya = y0 * 2.0;
        let yb = ya * (x1 / x0).powf(slope);
        if x1 > x0 {
            let _ = writeln!(
                s,
                r#"<path class="guide" clip-path="url(#frame)" d="M {:.2} {:.2} L {:.2} {:.2}" stroke="gray" stroke-dasharray="6 4" fill="none"><title>slope {slope}</title></path>"#,
                px(x0),
                py(ya),
                px(x1),
                py(yb)
            );
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}
