//! Tiny deterministic SVG writer: fixed float formatting and element order so
//! identical inputs produce byte-identical files.

use std::fmt::Write as _;

pub struct Svg {
    body: String,
    width: f64,
    height: f64,
}

fn fmt(v: f64) -> String {
    format!("{v:.4}")
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Self { body: String::new(), width, height }
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
            fmt(x),
            fmt(y),
            fmt(w),
            fmt(h),
            fill
        );
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="1"/>"#,
            fmt(x1),
            fmt(y1),
            fmt(x2),
            fmt(y2),
            stroke
        );
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str) {
        let mut s = String::new();
        for (x, y) in pts {
            let _ = write!(s, "{},{} ", fmt(*x), fmt(*y));
        }
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            s.trim_end(),
            stroke
        );
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, content: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{}" y="{}" font-size="{}" font-family="monospace">{}</text>"#,
            fmt(x),
            fmt(y),
            fmt(size),
            content
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n{}</svg>\n",
            fmt(self.width),
            fmt(self.height),
            fmt(self.width),
            fmt(self.height),
            fmt(self.width),
            fmt(self.height),
            self.body
        )
    }
}

/// Map a unit value to a blue-to-red heat color.
pub fn heat_color(v: f64) -> String {
    let v = v.clamp(0.0, 1.0);
    let r = (255.0 * v) as u8;
    let b = (255.0 * (1.0 - v)) as u8;
    let g = (128.0 * (1.0 - (2.0 * v - 1.0).abs())) as u8;
    format!("rgb({r},{g},{b})")
}
