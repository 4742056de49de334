//! Minimal SVG rendering: support rasters, heat maps and line plots.
//!
//! Coordinates are printed with fixed precision so identical inputs give
//! identical files.

use std::fmt::Write as _;

use ipsrf::measure::{Histogram, HistogramGrid};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

/// Colour for epoch `k`: red, green, blue, then a fixed cycle.
pub fn epoch_colour(k: usize) -> &'static str {
    const COLOURS: [&str; 6] = ["#d62728", "#2ca02c", "#1f77b4", "#ff7f0e", "#9467bd", "#8c564b"];
    COLOURS[k % COLOURS.len()]
}

fn header(s: &mut String, title: &str) {
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Maps data coordinates into the plotting area.
#[derive(Clone, Copy)]
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }

    fn axes(&self, s: &mut String, xlabel: &str, ylabel: &str, log_y: bool) {
        let (l, r) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
        let (t, b) = (MARGIN_TOP, HEIGHT - MARGIN_BOTTOM);
        let _ = writeln!(
            s,
            r#"<rect x="{l:.1}" y="{t:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
            r - l,
            b - t
        );
        for v in nice_ticks(self.x0, self.x1) {
            let x = self.px(v);
            let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{b:.1}" x2="{x:.2}" y2="{:.1}" stroke="black"/>"#, b + 5.0);
            let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.1}" text-anchor="middle">{}</text>"#, b + 18.0, tick_label(v));
        }
        for v in nice_ticks(self.y0, self.y1) {
            let y = self.py(v);
            let label = if log_y { format!("1e{}", v.round() as i64) } else { tick_label(v) };
            if log_y && (v - v.round()).abs() > 1e-9 {
                continue;
            }
            let _ = writeln!(s, r#"<line x1="{:.1}" y1="{y:.2}" x2="{l:.1}" y2="{y:.2}" stroke="black"/>"#, l - 5.0);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.2}" text-anchor="end">{label}</text>"#, l - 8.0, y + 4.0);
        }
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (l + r) / 2.0, HEIGHT - 10.0, escape(xlabel));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            (t + b) / 2.0,
            (t + b) / 2.0,
            escape(ylabel)
        );
    }
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

/// Roughly five round tick positions covering `[lo, hi]`.
fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    if !(span > 0.0 && span.is_finite()) {
        return vec![lo];
    }
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|st| *st >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

/// Occupied raster cells of each planar trajectory, one colour per epoch.
pub fn support_svg(paths: &[&[f64]], window: &HistogramGrid, pixels: usize, title: &str) -> String {
    let frame = Frame {
        x0: window.x_min,
        x1: window.x_max,
        y0: window.y_min,
        y1: window.y_max,
    };
    let mut s = String::new();
    header(&mut s, title);
    let cw = (window.x_max - window.x_min) / pixels as f64;
    let ch = (window.y_max - window.y_min) / pixels as f64;
    let (pw, ph) = (frame.px(window.x_min + cw) - frame.px(window.x_min), frame.py(window.y_min) - frame.py(window.y_min + ch));
    for (k, path) in paths.iter().enumerate() {
        let mut occupied = vec![false; pixels * pixels];
        for p in path.chunks_exact(2) {
            let (x, y) = (p[0], p[1]);
            if !(x >= window.x_min && x <= window.x_max && y >= window.y_min && y <= window.y_max) {
                continue;
            }
            let ix = (((x - window.x_min) / cw) as usize).min(pixels - 1);
            let iy = (((y - window.y_min) / ch) as usize).min(pixels - 1);
            occupied[iy * pixels + ix] = true;
        }
        let _ = writeln!(s, r#"<g fill="{}" fill-opacity="0.6">"#, epoch_colour(k));
        for (cell, _) in occupied.iter().enumerate().filter(|(_, o)| **o) {
            let (ix, iy) = (cell % pixels, cell / pixels);
            let x = frame.px(window.x_min + ix as f64 * cw);
            let y = frame.py(window.y_min + (iy + 1) as f64 * ch);
            let _ = writeln!(s, r#"<rect x="{x:.2}" y="{y:.2}" width="{pw:.2}" height="{ph:.2}"/>"#);
        }
        let _ = writeln!(s, "</g>");
        let ly = MARGIN_TOP + 16.0 + 16.0 * k as f64;
        let lx = WIDTH - MARGIN_RIGHT - 90.0;
        let _ = writeln!(s, r#"<rect x="{lx:.1}" y="{:.1}" width="10" height="10" fill="{}"/>"#, ly - 9.0, epoch_colour(k));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{ly:.1}">epoch {k}</text>"#, lx + 14.0);
    }
    frame.axes(&mut s, "x", "y", false);
    s.push_str("</svg>\n");
    s
}

/// Heat map of bin masses on a white-to-dark scale relative to the heaviest bin.
pub fn heatmap_svg(hist: &Histogram, title: &str) -> String {
    let g = &hist.grid;
    let frame = Frame {
        x0: g.x_min,
        x1: g.x_max,
        y0: g.y_min,
        y1: g.y_max,
    };
    let mut s = String::new();
    header(&mut s, title);
    let peak = hist.masses.iter().copied().fold(0.0, f64::max);
    let cw = (g.x_max - g.x_min) / g.bins_x as f64;
    let ch = (g.y_max - g.y_min) / g.bins_y as f64;
    let pw = frame.px(g.x_min + cw) - frame.px(g.x_min);
    let ph = frame.py(g.y_min) - frame.py(g.y_min + ch);
    if peak > 0.0 {
        for iy in 0..g.bins_y {
            for ix in 0..g.bins_x {
                let m = hist.mass(ix, iy);
                if m <= 0.0 {
                    continue;
                }
                // square root scale keeps the sparse lobes visible
                let level = (m / peak).sqrt();
                let shade = (255.0 * (1.0 - level)).round() as u8;
                let x = frame.px(g.x_min + ix as f64 * cw);
                let y = frame.py(g.y_min + (iy + 1) as f64 * ch);
                let _ = writeln!(
                    s,
                    r#"<rect x="{x:.2}" y="{y:.2}" width="{pw:.2}" height="{ph:.2}" fill="rgb({shade},{shade},255)"/>"#
                );
            }
        }
    }
    frame.axes(&mut s, "x", "y", false);
    s.push_str("</svg>\n");
    s
}

pub struct Series<'a> {
    pub label: String,
    pub colour: &'a str,
    pub points: Vec<(f64, f64)>,
}

/// Line plot with a logarithmic vertical axis; non-positive values are dropped.
/// `marks` are vertical guide lines (epoch boundaries).
pub fn log_line_plot_svg(series: &[Series], marks: &[f64], title: &str, xlabel: &str, ylabel: &str) -> String {
    let pts = || series.iter().flat_map(|s| s.points.iter()).filter(|p| p.1 > 0.0);
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts() {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y.log10());
        y1 = y1.max(y.log10());
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, -1.0, 0.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let frame = Frame {
        x0,
        x1,
        y0: y0.floor(),
        y1: y1.ceil().max(y0.floor() + 1.0),
    };
    let mut s = String::new();
    header(&mut s, title);
    for &m in marks {
        if m > x0 && m < x1 {
            let x = frame.px(m);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{MARGIN_TOP:.1}" x2="{x:.2}" y2="{:.1}" stroke="#999" stroke-dasharray="4 3"/>"##,
                HEIGHT - MARGIN_BOTTOM
            );
        }
    }
    for (i, ser) in series.iter().enumerate() {
        let mut d = String::new();
        for (x, y) in ser.points.iter().filter(|p| p.1 > 0.0) {
            let cmd = if d.is_empty() { 'M' } else { 'L' };
            let _ = write!(d, "{cmd}{:.2},{:.2} ", frame.px(*x), frame.py(y.log10()));
        }
        if !d.is_empty() {
            let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.2"/>"#, d.trim_end(), ser.colour);
        }
        let ly = MARGIN_TOP + 16.0 + 16.0 * i as f64;
        let lx = WIDTH - MARGIN_RIGHT - 150.0;
        let _ = writeln!(s, r#"<line x1="{lx:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{}" stroke-width="2"/>"#, ly - 4.0, lx + 12.0, ly - 4.0, ser.colour);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{ly:.1}">{}</text>"#, lx + 16.0, escape(&ser.label));
    }
    frame.axes(&mut s, xlabel, ylabel, true);
    s.push_str("</svg>\n");
    s
}
