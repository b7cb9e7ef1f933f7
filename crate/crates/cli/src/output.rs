//! CSV and SVG rendering.

use std::fmt::Write;

use scosara_core::{Error, Result};

/// Shortest round-trip scientific notation, independent of locale.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// `(x_lo, x_hi, decade_lo, decade_hi)` covering every point.
pub fn chart_bounds(series: &[Series]) -> Result<(f64, f64, i32, i32)> {
    let pts: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if pts.is_empty() {
        return Err(Error::InvalidArgument("nothing to plot".into()));
    }
    if pts.iter().any(|&(x, y)| !x.is_finite() || !(y > 0.0 && y.is_finite())) {
        return Err(Error::InvalidArgument("log-scale plot needs finite positive values".into()));
    }
    let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &pts {
        x_lo = x_lo.min(x);
        x_hi = x_hi.max(x);
        y_lo = y_lo.min(y);
        y_hi = y_hi.max(y);
    }
    if x_hi == x_lo {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    let d_lo = y_lo.log10().floor() as i32;
    let mut d_hi = y_hi.log10().ceil() as i32;
    if d_hi == d_lo {
        d_hi += 1;
    }
    Ok((x_lo, x_hi, d_lo, d_hi))
}

/// Line chart with a log-scale y axis, one polyline per series.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<String> {
    let (x_lo, x_hi, d_lo, d_hi) = chart_bounds(series)?;
    let (w, h) = (720.0, 480.0);
    let (left, right, top, bottom) = (80.0, 160.0, 40.0, 60.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - x_lo) / (x_hi - x_lo) * pw;
    let sy = |y: f64| top + ph - (y.log10() - d_lo as f64) / (d_hi - d_lo) as f64 * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, left + pw / 2.0, escape(title));
    let _ = writeln!(s, r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for d in d_lo..=d_hi {
        let y = sy(10f64.powi(d));
        let _ = writeln!(s, r##"<line x1="{left}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/>"##, left + pw);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">1e{d}</text>"#, left - 6.0, y + 4.0);
    }
    for k in 0..=4 {
        let x = x_lo + (x_hi - x_lo) * k as f64 / 4.0;
        let px = sx(x);
        let _ = writeln!(s, r##"<line x1="{px:.2}" y1="{top}" x2="{px:.2}" y2="{}" stroke="#eee"/>"##, top + ph);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#, top + ph + 18.0, fmt_tick(x));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, left + pw / 2.0, h - 15.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        for &(x, y) in &ser.points {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y));
        }
        let ly = top + 10.0 + 18.0 * i as f64;
        let lx = left + pw + 15.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&ser.name));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn fmt_tick(x: f64) -> String {
    if x.abs() >= 0.01 || x == 0.0 {
        format!("{x:.3}")
    } else {
        format!("{x:.1e}")
    }
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Grayscale magnitude map, row `iz` drawn at depth `iz`. Values are
/// normalized to the image maximum.
pub fn heatmap(values: &[f64], nx: usize, nz: usize, title: &str) -> Result<String> {
    if values.len() != nx * nz || values.is_empty() {
        return Err(Error::InvalidArgument("heat map size mismatch".into()));
    }
    let peak = values.iter().cloned().fold(0.0, f64::max);
    let cell = 12.0;
    let (w, h) = (nx as f64 * cell, nz as f64 * cell + 24.0);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="black"/>"#);
    let _ = writeln!(s, r#"<text x="4" y="16" fill="white">{}</text>"#, escape(title));
    for iz in 0..nz {
        for ix in 0..nx {
            let v = values[iz * nx + ix];
            let g = if peak > 0.0 { (255.0 * v / peak).round() as u8 } else { 0 };
            if g == 0 {
                continue;
            }
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{cell}" height="{cell}" fill="rgb({g},{g},{g})"/>"#,
                ix as f64 * cell,
                24.0 + iz as f64 * cell
            );
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}
