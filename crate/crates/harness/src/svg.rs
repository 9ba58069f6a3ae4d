//! Minimal self-contained SVG charts: line plots, pole maps with damping
//! iso-lines and root loci.

use std::fmt::Write as _;

use psstune::numeric::C64;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

/// Round tick spacing giving about `target` intervals over `[lo, hi]`.
pub fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return vec![lo];
    }
    let raw = (hi - lo) / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step - 1e-9).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{:.6}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[derive(Debug, Clone, Copy)]
pub enum Marker {
    Dot,
    Cross,
    Circle,
}

enum Item {
    Line { points: Vec<(f64, f64)>, color: String, width: f64, dash: Option<&'static str> },
    Points { points: Vec<(f64, f64)>, color: String, marker: Marker },
    Label { at: (f64, f64), text: String, color: String },
}

/// One chart with linear axes.
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub width: f64,
    pub height: f64,
    x: (f64, f64),
    y: (f64, f64),
    items: Vec<Item>,
    legend: Vec<(String, String)>,
}

const MARGIN: (f64, f64, f64, f64) = (70.0, 20.0, 40.0, 50.0); // left, right, top, bottom

impl Chart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            width: 720.0,
            height: 420.0,
            x: (f64::INFINITY, f64::NEG_INFINITY),
            y: (f64::INFINITY, f64::NEG_INFINITY),
            items: vec![],
            legend: vec![],
        }
    }

    fn include(&mut self, pts: &[(f64, f64)]) {
        for &(x, y) in pts.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
            self.x = (self.x.0.min(x), self.x.1.max(x));
            self.y = (self.y.0.min(y), self.y.1.max(y));
        }
    }

    /// Fixes the visible range; data outside it is clipped.
    pub fn set_range(&mut self, x: (f64, f64), y: (f64, f64)) {
        self.x = x;
        self.y = y;
    }

    pub fn line(&mut self, label: Option<&str>, points: Vec<(f64, f64)>, color: &str) {
        self.include(&points);
        if let Some(l) = label {
            self.legend.push((l.into(), color.into()));
        }
        self.items.push(Item::Line { points, color: color.into(), width: 1.4, dash: None });
    }

    /// Dotted guide line that does not widen the axes.
    pub fn guide(&mut self, points: Vec<(f64, f64)>) {
        self.items.push(Item::Line { points, color: "#999999".into(), width: 0.8, dash: Some("2,3") });
    }

    pub fn points(&mut self, label: Option<&str>, points: Vec<(f64, f64)>, color: &str, marker: Marker) {
        self.include(&points);
        if let Some(l) = label {
            self.legend.push((l.into(), color.into()));
        }
        self.items.push(Item::Points { points, color: color.into(), marker });
    }

    pub fn label(&mut self, at: (f64, f64), text: &str, color: &str) {
        self.items.push(Item::Label { at, text: text.into(), color: color.into() });
    }

    fn padded(range: (f64, f64)) -> (f64, f64) {
        let (lo, hi) = range;
        if !lo.is_finite() || !hi.is_finite() {
            return (0.0, 1.0);
        }
        let span = hi - lo;
        if span <= 1e-12 * lo.abs().max(1.0) {
            let d = lo.abs().max(1.0) * 0.05;
            return (lo - d, hi + d);
        }
        (lo - 0.05 * span, hi + 0.05 * span)
    }

    pub fn render(&self) -> String {
        let (xl, xh) = Self::padded(self.x);
        let (yl, yh) = Self::padded(self.y);
        let (ml, mr, mt, mb) = MARGIN;
        let pw = self.width - ml - mr;
        let ph = self.height - mt - mb;
        let sx = |x: f64| ml + (x - xl) / (xh - xl) * pw;
        let sy = |y: f64| mt + (yh - y) / (yh - yl) * ph;
        let mut o = String::new();
        let _ = writeln!(
            o,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#,
            w = self.width,
            h = self.height
        );
        let _ = writeln!(o, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
        let _ = writeln!(o, r#"<defs><clipPath id="plot"><rect x="{ml}" y="{mt}" width="{pw}" height="{ph}"/></clipPath></defs>"#);
        let _ = writeln!(o, r#"<text x="{}" y="22" text-anchor="middle" font-size="13">{}</text>"#, self.width / 2.0, escape(&self.title));
        for t in ticks(xl, xh, 8) {
            let x = sx(t);
            let _ = writeln!(o, r##"<line x1="{x:.2}" y1="{mt}" x2="{x:.2}" y2="{:.2}" stroke="#eeeeee"/>"##, mt + ph);
            let _ = writeln!(o, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, mt + ph + 15.0, fmt_tick(t));
        }
        for t in ticks(yl, yh, 6) {
            let y = sy(t);
            let _ = writeln!(o, r##"<line x1="{ml}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#eeeeee"/>"##, ml + pw);
            let _ = writeln!(o, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, ml - 5.0, y + 4.0, fmt_tick(t));
        }
        let _ = writeln!(o, r##"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#333333"/>"##);
        let _ = writeln!(
            o,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            ml + pw / 2.0,
            self.height - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            o,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            mt + ph / 2.0,
            mt + ph / 2.0,
            escape(&self.y_label)
        );
        let _ = writeln!(o, r#"<g clip-path="url(#plot)">"#);
        for item in &self.items {
            match item {
                Item::Line { points, color, width, dash } => {
                    let pts: Vec<String> = points
                        .iter()
                        .filter(|(x, y)| x.is_finite() && y.is_finite())
                        .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                        .collect();
                    let dash = dash.map(|d| format!(r#" stroke-dasharray="{d}""#)).unwrap_or_default();
                    let _ = writeln!(
                        o,
                        r#"<polyline fill="none" stroke="{color}" stroke-width="{width}"{dash} points="{}"/>"#,
                        pts.join(" ")
                    );
                }
                Item::Points { points, color, marker } => {
                    for &(x, y) in points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
                        let (px, py) = (sx(x), sy(y));
                        let _ = match marker {
                            Marker::Dot => writeln!(o, r#"<circle cx="{px:.2}" cy="{py:.2}" r="2" fill="{color}"/>"#),
                            Marker::Circle => writeln!(
                                o,
                                r#"<circle cx="{px:.2}" cy="{py:.2}" r="4" fill="none" stroke="{color}" stroke-width="1.2"/>"#
                            ),
                            Marker::Cross => writeln!(
                                o,
                                r#"<path d="M{:.2},{:.2}L{:.2},{:.2}M{:.2},{:.2}L{:.2},{:.2}" stroke="{color}" stroke-width="1.4"/>"#,
                                px - 4.0,
                                py - 4.0,
                                px + 4.0,
                                py + 4.0,
                                px - 4.0,
                                py + 4.0,
                                px + 4.0,
                                py - 4.0
                            ),
                        };
                    }
                }
                Item::Label { at, text, color } => {
                    let _ = writeln!(
                        o,
                        r#"<text x="{:.2}" y="{:.2}" fill="{color}" font-size="10">{}</text>"#,
                        sx(at.0) + 3.0,
                        sy(at.1) - 3.0,
                        escape(text)
                    );
                }
            }
        }
        let _ = writeln!(o, "</g>");
        for (i, (label, color)) in self.legend.iter().enumerate() {
            let y = mt + 14.0 + 14.0 * i as f64;
            let x = ml + pw - 150.0;
            let _ = writeln!(o, r#"<line x1="{x:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#, y - 4.0, x + 18.0, y - 4.0);
            let _ = writeln!(o, r#"<text x="{:.2}" y="{y:.2}">{}</text>"#, x + 22.0, escape(label));
        }
        o.push_str("</svg>\n");
        o
    }
}

/// Several charts stacked vertically in one document.
pub fn stack(charts: &[Chart]) -> String {
    let width = charts.iter().map(|c| c.width).fold(0.0, f64::max);
    let height: f64 = charts.iter().map(|c| c.height).sum();
    let mut o = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    o.push('\n');
    let mut y = 0.0;
    for (i, c) in charts.iter().enumerate() {
        // clip-path ids must be unique within the document
        let body = c.render().replace("id=\"plot\"", &format!("id=\"plot{i}\"")).replace("url(#plot)", &format!("url(#plot{i})"));
        let _ = writeln!(o, r#"<g transform="translate(0 {y})">"#);
        o.push_str(&body);
        o.push_str("</g>\n");
        y += c.height;
    }
    o.push_str("</svg>\n");
    o
}

pub const ISO_DAMPING: [f64; 4] = [0.0, 0.05, 0.1, 0.2];

/// Adds dotted constant-damping rays through the origin up to `w_max`.
pub fn damping_isolines(chart: &mut Chart, w_max: f64) {
    for xi in ISO_DAMPING {
        let sigma = -xi / (1.0 - xi * xi).sqrt() * w_max;
        chart.guide(vec![(0.0, 0.0), (sigma, w_max)]);
        chart.guide(vec![(0.0, 0.0), (sigma, -w_max)]);
        chart.label((sigma, w_max * 0.97), &format!("ξ={xi}"), "#777777");
    }
}

fn window(poles: &[C64], w_cap: f64) -> ((f64, f64), (f64, f64)) {
    let shown: Vec<&C64> = poles.iter().filter(|z| z.im.abs() <= w_cap && z.re >= -w_cap).collect();
    let w = shown.iter().map(|z| z.im.abs()).fold(1.0, f64::max) * 1.1;
    let lo = shown.iter().map(|z| z.re).fold(-1.0, f64::min) * 1.1;
    let hi = shown.iter().map(|z| z.re).fold(0.2, f64::max) * 1.1;
    ((lo, hi.max(0.1 * w / 2.0)), (-w, w))
}

/// Pole map of a spectrum, zoomed on `|Im| <= w_cap`.
pub fn pole_map(title: &str, poles: &[C64], w_cap: f64) -> String {
    let mut chart = Chart::new(title, "Re λ (1/s)", "Im λ (rad/s)");
    let (xr, yr) = window(poles, w_cap);
    chart.set_range(xr, yr);
    damping_isolines(&mut chart, yr.1);
    chart.points(Some("eigenvalues"), poles.iter().map(|z| (z.re, z.im)).collect(), color(0), Marker::Cross);
    chart.render()
}

/// Root locus: one polyline per branch, open-loop poles as crosses, zeros as
/// circles and the selected gain as dots.
pub fn root_locus(title: &str, branches: &[Vec<C64>], open_loop: &[C64], zeros: &[C64], selected: &[C64], w_cap: f64) -> String {
    let mut chart = Chart::new(title, "Re λ (1/s)", "Im λ (rad/s)");
    let all: Vec<C64> = open_loop.iter().chain(selected).copied().collect();
    let (xr, yr) = window(&all, w_cap);
    chart.set_range(xr, yr);
    damping_isolines(&mut chart, yr.1);
    for b in branches {
        chart.line(None, b.iter().map(|z| (z.re, z.im)).collect(), "#6baed6");
    }
    chart.points(Some("open loop"), open_loop.iter().map(|z| (z.re, z.im)).collect(), "#000000", Marker::Cross);
    chart.points(Some("zeros"), zeros.iter().map(|z| (z.re, z.im)).collect(), "#2ca02c", Marker::Circle);
    chart.points(Some("selected gain"), selected.iter().map(|z| (z.re, z.im)).collect(), color(1), Marker::Dot);
    chart.render()
}
