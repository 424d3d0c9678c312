//! Minimal SVG 1.1 plots.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#7f7f7f"];

#[derive(Clone, Copy, Debug)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub log: bool,
}

impl Axis {
    pub fn linear(lo: f64, hi: f64) -> Self {
        Axis { lo, hi, log: false }.padded()
    }

    pub fn log(lo: f64, hi: f64) -> Self {
        Axis { lo, hi, log: true }.padded()
    }

    /// Axis covering every finite value (positive ones on a log axis).
    pub fn fit(values: impl IntoIterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            if v.is_finite() && (!log || v > 0.0) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if !lo.is_finite() {
            (lo, hi) = if log { (1.0, 10.0) } else { (0.0, 1.0) };
        }
        Axis { lo, hi, log }.padded()
    }

    fn padded(self) -> Self {
        let (mut lo, mut hi) = (self.lo, self.hi);
        if self.log {
            let (a, b) = (lo.log10(), hi.log10());
            let pad = if b > a { 0.05 * (b - a) } else { 0.5 };
            lo = 10f64.powf(a - pad);
            hi = 10f64.powf(b + pad);
        } else {
            let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 * lo.abs().max(1e-300) };
            lo -= pad;
            hi += pad;
        }
        Axis { lo, hi, log: self.log }
    }

    fn unit(&self, v: f64) -> f64 {
        if self.log {
            (v.log10() - self.lo.log10()) / (self.hi.log10() - self.lo.log10())
        } else {
            (v - self.lo) / (self.hi - self.lo)
        }
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (self.lo.log10().ceil() as i32, self.hi.log10().floor() as i32);
            let step = ((b - a) / 6 + 1).max(1);
            (a..=b).step_by(step as usize).map(|e| 10f64.powi(e)).collect()
        } else {
            (0..=4).map(|i| self.lo + (self.hi - self.lo) * i as f64 / 4.0).collect()
        }
    }
}

fn label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e-2 && v.abs() < 1e4 {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub struct Plot {
    title: String,
    x_label: String,
    y_label: String,
    x: Axis,
    y: Axis,
    body: String,
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str, x: Axis, y: Axis) -> Self {
        Plot { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), x, y, body: String::new() }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + self.x.unit(x) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - self.y.unit(y) * (H - TOP - BOTTOM)
    }

    fn visible(&self, x: f64, y: f64) -> bool {
        x.is_finite() && y.is_finite() && (!self.x.log || x > 0.0) && (!self.y.log || y > 0.0)
    }

    pub fn points(&mut self, pts: &[(f64, f64)], color: &str, r: f64) {
        for &(x, y) in pts {
            if self.visible(x, y) {
                let _ = writeln!(self.body, r#"<circle cx="{:.2}" cy="{:.2}" r="{r}" fill="{color}"/>"#, self.px(x), self.py(y));
            }
        }
    }

    pub fn line(&mut self, pts: &[(f64, f64)], color: &str) {
        let coords: Vec<String> =
            pts.iter().filter(|(x, y)| self.visible(*x, *y)).map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y))).collect();
        if coords.len() >= 2 {
            let _ = writeln!(self.body, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, coords.join(" "));
        }
    }

    pub fn segment(&mut self, a: (f64, f64), b: (f64, f64), color: &str) {
        if self.visible(a.0, a.1) && self.visible(b.0, b.1) {
            let _ = writeln!(
                self.body,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="1"/>"#,
                self.px(a.0),
                self.py(a.1),
                self.px(b.0),
                self.py(b.1)
            );
        }
    }

    /// Filled rectangle between data corners.
    pub fn cell(&mut self, x0: f64, x1: f64, y0: f64, y1: f64, color: &str) {
        let (a, b) = (self.px(x0), self.px(x1));
        let (c, d) = (self.py(y0), self.py(y1));
        let _ = writeln!(
            self.body,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
            a.min(b),
            c.min(d),
            (b - a).abs().max(0.5),
            (d - c).abs().max(0.5)
        );
    }

    pub fn legend(&mut self, entries: &[(&str, &str)]) {
        for (i, (name, color)) in entries.iter().enumerate() {
            let y = TOP + 14.0 + 16.0 * i as f64;
            let x = W - RIGHT - 140.0;
            let _ = writeln!(self.body, r#"<rect x="{x}" y="{}" width="10" height="10" fill="{color}"/>"#, y - 9.0);
            let _ = writeln!(self.body, r#"<text x="{}" y="{y}" font-size="11">{}</text>"#, x + 14.0, esc(name));
        }
    }

    /// Render with a comment naming the data file the figure was drawn from.
    pub fn render(&self, source: &str, seed: u64) -> String {
        let mut s = String::new();
        let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif">"#
        );
        let _ = writeln!(s, "<!-- source={} seed={seed} -->", esc(source));
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="24" font-size="14" text-anchor="middle">{}</text>"#, W / 2.0, esc(&self.title));
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        let _ = writeln!(s, r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y1 - y0);
        for t in self.x.ticks() {
            let px = self.px(t);
            let _ = writeln!(s, r#"<line x1="{px:.2}" y1="{y1}" x2="{px:.2}" y2="{}" stroke="black"/>"#, y1 + 5.0);
            let _ = writeln!(s, r#"<text x="{px:.2}" y="{}" font-size="10" text-anchor="middle">{}</text>"#, y1 + 18.0, label(t));
        }
        for t in self.y.ticks() {
            let py = self.py(t);
            let _ = writeln!(s, r#"<line x1="{}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/>"#, x0 - 5.0);
            let _ = writeln!(s, r#"<text x="{}" y="{:.2}" font-size="10" text-anchor="end">{}</text>"#, x0 - 8.0, py + 3.0, label(t));
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            H - 16.0,
            esc(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{0}" font-size="12" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
            (y0 + y1) / 2.0,
            esc(&self.y_label)
        );
        s.push_str(&self.body);
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_well_formed_document() {
        let mut p = Plot::new("t <&>", "x", "y", Axis::linear(0.0, 1.0), Axis::log(1e-3, 1.0));
        p.points(&[(0.5, 0.1), (0.2, -1.0)], PALETTE[0], 2.0);
        p.line(&[(0.0, 1e-3), (1.0, 1.0)], PALETTE[1]);
        let s = p.render("data.csv", 3);
        assert!(s.starts_with("<?xml"));
        assert!(s.contains("source=data.csv seed=3"));
        assert!(s.contains("t &lt;&amp;&gt;"));
        assert_eq!(s.matches("<circle").count(), 1);
        assert!(s.trim_end().ends_with("</svg>"));
    }
}
