//! Minimal static SVG charts: line plots and grid heatmaps.

use std::fmt::Write;

use crate::dynamics::LandscapeGrid;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Clone, Debug, PartialEq)]
pub struct LineSeries {
    pub label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl LineSeries {
    pub fn new(label: impl Into<String>, xs: Vec<f64>, ys: Vec<f64>) -> Self {
        Self { label: label.into(), xs, ys }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Axes {
    pub log_x: bool,
    pub log_y: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn fmt_tick(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else if x.abs() >= 1e4 || x.abs() < 1e-2 {
        format!("{x:.1e}")
    } else {
        let s = format!("{x:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_B - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        (0.0, 1.0)
    } else if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str, ax: Axes) {
    let (l, r, t, b) = (MARGIN_L, WIDTH - MARGIN_R, MARGIN_T, HEIGHT - MARGIN_B);
    let _ = writeln!(out, r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#, r - l, b - t);
    for i in 0..=4 {
        let x = f.x0 + (f.x1 - f.x0) * i as f64 / 4.0;
        let y = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
        let (xv, yv) = (if ax.log_x { 10f64.powf(x) } else { x }, if ax.log_y { 10f64.powf(y) } else { y });
        let (px, py) = (f.px(x), f.py(y));
        let _ = writeln!(out, r#"<line x1="{px:.2}" y1="{b}" x2="{px:.2}" y2="{}" stroke="black"/>"#, b + 5.0);
        let _ = writeln!(out, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#, b + 18.0, fmt_tick(xv));
        let _ = writeln!(out, r#"<line x1="{}" y1="{py:.2}" x2="{l}" y2="{py:.2}" stroke="black"/>"#, l - 5.0);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, l - 8.0, py + 4.0, fmt_tick(yv));
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (l + r) / 2.0, HEIGHT - 12.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        (t + b) / 2.0,
        escape(y_label)
    );
}

/// Line chart of one or more series. Points that are non-finite, or
/// non-positive on a log axis, are skipped.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[LineSeries], ax: Axes) -> String {
    let tx = |x: f64| if ax.log_x { x.log10() } else { x };
    let ty = |y: f64| if ax.log_y { y.log10() } else { y };
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.xs.iter()
                .zip(&s.ys)
                .map(|(&x, &y)| (tx(x), ty(y)))
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .collect()
        })
        .collect();
    let all = pts.iter().flatten();
    let (x0, x1) = padded(
        all.clone().map(|p| p.0).fold(f64::INFINITY, f64::min),
        all.clone().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max),
    );
    let (y0, y1) = padded(
        all.clone().map(|p| p.1).fold(f64::INFINITY, f64::min),
        all.map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
    );
    let f = Frame { x0, x1, y0, y1 };
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, x_label, y_label, ax);
    for (k, (s, p)) in series.iter().zip(&pts).enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y))).collect();
        if !path.is_empty() {
            let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        }
        let ly = MARGIN_T + 16.0 + 16.0 * k as f64;
        let lx = WIDTH - MARGIN_R - 150.0;
        let _ = writeln!(out, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, lx + 25.0, ly + 4.0, escape(&s.label));
    }
    out.push_str("</svg>\n");
    out
}

/// Blue below the midpoint, white at it, red above; `t` in `[-1, 1]`.
pub fn diverging_color(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(-1.0, 1.0) } else { 0.0 };
    let (r, g, b) = if t < 0.0 {
        let s = -t;
        (255.0 * (1.0 - s) + 33.0 * s, 255.0 * (1.0 - s) + 102.0 * s, 255.0 * (1.0 - s) + 172.0 * s)
    } else {
        (255.0 * (1.0 - t) + 178.0 * t, 255.0 * (1.0 - t) + 24.0 * t, 255.0 * (1.0 - t) + 43.0 * t)
    };
    format!("#{:02x}{:02x}{:02x}", r.round() as u8, g.round() as u8, b.round() as u8)
}

/// Heatmap of a landscape grid with its argmin marked and an optional
/// `(u, v)` path drawn on top.
pub fn heatmap(grid: &LandscapeGrid, title: &str, overlay: Option<&[(f64, f64)]>) -> String {
    let n = grid.resolution;
    let f = Frame { x0: grid.lower[0], x1: grid.upper[0], y0: grid.lower[1], y1: grid.upper[1] };
    let finite = grid.values.iter().flatten().copied().filter(|x| x.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = padded(lo, hi);
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut out = String::new();
    header(&mut out, title);
    let cw = (WIDTH - MARGIN_L - MARGIN_R) / n as f64;
    let ch = (HEIGHT - MARGIN_T - MARGIN_B) / n as f64;
    for (j, row) in grid.values.iter().enumerate() {
        for (i, &x) in row.iter().enumerate() {
            let px = MARGIN_L + i as f64 * cw;
            let py = HEIGHT - MARGIN_B - (j + 1) as f64 * ch;
            let fill = if x.is_finite() { diverging_color((x - mid) / half) } else { "#808080".into() };
            let _ = writeln!(
                out,
                r#"<rect x="{px:.2}" y="{py:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
                cw + 0.05,
                ch + 0.05
            );
        }
    }
    axes(&mut out, &f, "u", "v", Axes::default());
    if let Some(path) = overlay {
        let pts: Vec<String> = path
            .iter()
            .filter(|(u, v)| u.is_finite() && v.is_finite())
            .map(|&(u, v)| {
                let u = u.clamp(f.x0, f.x1);
                let v = v.clamp(f.y0, f.y1);
                format!("{:.2},{:.2}", f.px(u), f.py(v))
            })
            .collect();
        if !pts.is_empty() {
            let _ = writeln!(out, r#"<polyline fill="none" stroke="black" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        }
    }
    if let Some((u, v, x)) = grid.argmin() {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="5" fill="none" stroke="black" stroke-width="2"><title>argmin {}</title></circle>"#,
            f.px(u),
            f.py(v),
            x
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="end">range [{}, {}]</text>"#,
        WIDTH - MARGIN_R,
        MARGIN_T - 6.0,
        fmt_tick(lo),
        fmt_tick(hi)
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colormap_endpoints() {
        assert_eq!(diverging_color(0.0), "#ffffff");
        assert_eq!(diverging_color(-1.0), "#2166ac");
        assert_eq!(diverging_color(1.0), "#b2182b");
        assert_eq!(diverging_color(f64::NAN), "#ffffff");
    }

    #[test]
    fn labels_are_escaped() {
        let svg = line_chart("a<b & c", "x", "y", &[LineSeries::new("s", vec![1.0, 2.0], vec![1.0, 4.0])], Axes::default());
        assert!(svg.contains("a&lt;b &amp; c"));
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
