//! Minimal deterministic line plots.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotStyle {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub width: u32,
    pub height: u32,
}

impl Default for PlotStyle {
    fn default() -> Self {
        Self {
            title: String::new(),
            x_label: "t".into(),
            y_label: String::new(),
            log_y: false,
            width: 640,
            height: 400,
        }
    }
}

const COLOURS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 45.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e-2 && v.abs() < 1e4 {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

/// Renders the series as an SVG document. Log-y plots need positive values.
pub fn emit_svg(series: &[Series], style: &PlotStyle) -> Result<String> {
    if series.is_empty() || series.iter().all(|s| s.x.is_empty()) {
        return Err(Error::EmptySeries);
    }
    for s in series {
        if s.x.len() != s.y.len() {
            return Err(Error::invalid(format!(
                "series `{}` has mismatched lengths",
                s.label
            )));
        }
        if s.x.iter().chain(&s.y).any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "series `{}` has non-finite values",
                s.label
            )));
        }
        if style.log_y && s.y.iter().any(|&v| v <= 0.0) {
            return Err(Error::invalid(format!(
                "series `{}` has non-positive values on a log axis",
                s.label
            )));
        }
    }
    let ty = |v: f64| if style.log_y { v.log10() } else { v };
    let mut xlo = f64::INFINITY;
    let mut xhi = f64::NEG_INFINITY;
    let mut ylo = f64::INFINITY;
    let mut yhi = f64::NEG_INFINITY;
    for s in series {
        for (&x, &y) in s.x.iter().zip(&s.y) {
            xlo = xlo.min(x);
            xhi = xhi.max(x);
            ylo = ylo.min(ty(y));
            yhi = yhi.max(ty(y));
        }
    }
    if xhi - xlo <= 0.0 {
        xlo -= 0.5;
        xhi += 0.5;
    }
    if yhi - ylo <= 0.0 {
        ylo -= 0.5;
        yhi += 0.5;
    }
    let (w, h) = (style.width as f64, style.height as f64);
    let pw = w - MARGIN_L - MARGIN_R;
    let ph = h - MARGIN_T - MARGIN_B;
    let px = |x: f64| MARGIN_L + (x - xlo) / (xhi - xlo) * pw;
    let py = |y: f64| MARGIN_T + (1.0 - (y - ylo) / (yhi - ylo)) * ph;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        style.width, style.height, style.width, style.height
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if !style.title.is_empty() {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="18" text-anchor="middle" font-size="14" font-family="sans-serif">{}</text>"#,
            w / 2.0,
            escape(&style.title)
        );
    }
    let _ = writeln!(
        out,
        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        MARGIN_L, MARGIN_T, pw, ph
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = xlo + f * (xhi - xlo);
        let yv = ylo + f * (yhi - ylo);
        let (x, y) = (px(xv), py(yv));
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
            MARGIN_T + ph,
            MARGIN_T + ph + 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="11" font-family="sans-serif">{}</text>"#,
            MARGIN_T + ph + 18.0,
            tick_label(xv)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black"/>"#,
            MARGIN_L - 5.0,
            MARGIN_L
        );
        let ylab = if style.log_y {
            tick_label(10f64.powf(yv))
        } else {
            tick_label(yv)
        };
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="11" font-family="sans-serif">{}</text>"#,
            MARGIN_L - 8.0,
            y + 4.0,
            ylab
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12" font-family="sans-serif">{}</text>"#,
        MARGIN_L + pw / 2.0,
        h - 8.0,
        escape(&style.x_label)
    );
    if !style.y_label.is_empty() {
        let label = if style.log_y {
            format!("{} (log)", style.y_label)
        } else {
            style.y_label.clone()
        };
        let _ = writeln!(
            out,
            r#"<text x="14" y="{:.2}" text-anchor="middle" font-size="12" font-family="sans-serif" transform="rotate(-90 14 {:.2})">{}</text>"#,
            MARGIN_T + ph / 2.0,
            MARGIN_T + ph / 2.0,
            escape(&label)
        );
    }
    for (k, s) in series.iter().enumerate() {
        let colour = COLOURS[k % COLOURS.len()];
        let pts: Vec<String> =
            s.x.iter()
                .zip(&s.y)
                .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(ty(y))))
                .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = MARGIN_T + 14.0 + 16.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{ly:.2}" text-anchor="end" font-size="11" font-family="sans-serif" fill="{colour}">{}</text>"#,
            MARGIN_L + pw - 6.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}
