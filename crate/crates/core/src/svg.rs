//! Minimal static SVG rendering: polylines and scatter plots with linear
//! axes.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// How tick labels are printed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TickFormat {
    /// Fractions shown as percentages.
    Percent,
    Plain,
}

#[derive(Debug, Clone)]
pub struct Axes {
    pub x_label: String,
    pub y_label: String,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub x_ticks: TickFormat,
    pub y_ticks: TickFormat,
}

struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    axes: Axes,
}

impl Frame {
    fn new(axes: Axes, equal_scales: bool) -> Self {
        let (mut w, mut h) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
        if equal_scales {
            let sx = w / span(axes.x_range);
            let sy = h / span(axes.y_range);
            let s = sx.min(sy);
            w = s * span(axes.x_range);
            h = s * span(axes.y_range);
        }
        Frame {
            x0: MARGIN,
            y0: MARGIN,
            w,
            h,
            axes,
        }
    }

    fn px(&self, x: f64) -> f64 {
        let (lo, hi) = self.axes.x_range;
        self.x0 + (x - lo) / (hi - lo) * self.w
    }

    fn py(&self, y: f64) -> f64 {
        let (lo, hi) = self.axes.y_range;
        self.y0 + self.h - (y - lo) / (hi - lo) * self.h
    }
}

fn span((lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        hi - lo
    } else {
        1.0
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_label(v: f64, fmt: TickFormat) -> String {
    match fmt {
        TickFormat::Percent => format!("{}%", (v * 1000.0).round() / 10.0),
        TickFormat::Plain => format!("{}", (v * 1000.0).round() / 1000.0),
    }
}

fn open(out: &mut String, f: &Frame) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        out,
        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        f.x0, f.y0, f.w, f.h
    );
    for i in 0..=5 {
        let t = i as f64 / 5.0;
        let xv = f.axes.x_range.0 + t * (f.axes.x_range.1 - f.axes.x_range.0);
        let yv = f.axes.y_range.0 + t * (f.axes.y_range.1 - f.axes.y_range.0);
        let (x, y) = (f.px(xv), f.py(yv));
        let bottom = f.y0 + f.h;
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{bottom:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            bottom + 4.0,
            bottom + 16.0,
            tick_label(xv, f.axes.x_ticks)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            f.x0 - 4.0,
            f.x0,
            f.x0 - 6.0,
            y + 4.0,
            tick_label(yv, f.axes.y_ticks)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        f.x0 + f.w / 2.0,
        f.y0 + f.h + 36.0,
        escape(&f.axes.x_label)
    );
    let (lx, ly) = (16.0, f.y0 + f.h / 2.0);
    let _ = writeln!(
        out,
        r#"<text x="{lx:.2}" y="{ly:.2}" text-anchor="middle" transform="rotate(-90 {lx:.2} {ly:.2})">{}</text>"#,
        escape(&f.axes.y_label)
    );
}

/// One polyline per named series.
pub fn line_chart(series: &[(&str, Vec<(f64, f64)>)], axes: Axes) -> String {
    let f = Frame::new(axes, false);
    let mut out = String::new();
    open(&mut out, &f);
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1" points="{}"><title>{}</title></polyline>"#,
            path.join(" "),
            escape(name)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" fill="{color}">{}</text>"#,
            f.x0 + f.w - 80.0,
            f.y0 + 14.0 * (i as f64 + 1.0),
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Scatter plot; `equal_scales` keeps one unit the same length on both
/// axes.
pub fn scatter(points: &[(f64, f64)], axes: Axes, equal_scales: bool) -> String {
    let f = Frame::new(axes, equal_scales);
    let mut out = String::new();
    open(&mut out, &f);
    out.push_str(r##"<g fill="#1f77b4" fill-opacity="0.4">"##);
    out.push('\n');
    for &(x, y) in points {
        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="1.2"/>"#, f.px(x), f.py(y));
    }
    out.push_str("</g>\n</svg>\n");
    out
}
