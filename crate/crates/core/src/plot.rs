//! Minimal SVG bar and line charts for the run reports.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 70.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// One x position with one value (and optional error bar) per series.
#[derive(Debug, Clone, PartialEq)]
pub struct BarGroup {
    pub label: String,
    pub values: Vec<(f64, Option<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarChart {
    pub title: String,
    pub y_label: String,
    pub series: Vec<String>,
    pub groups: Vec<BarGroup>,
    /// Fixed y range; derived from the data when `None`.
    pub y_range: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSeries {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<LineSeries>,
    pub y_range: Option<(f64, f64)>,
}

struct Frame {
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn new(values: impl Iterator<Item = f64>, fixed: Option<(f64, f64)>) -> Self {
        if let Some((y_min, y_max)) = fixed {
            return Self { y_min, y_max };
        }
        let (mut lo, mut hi) = (0.0f64, 0.0f64);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi - lo < 1e-12 {
            hi = lo + 1.0;
        }
        let pad = 0.05 * (hi - lo);
        Self {
            y_min: if lo < 0.0 { lo - pad } else { lo },
            y_max: hi + pad,
        }
    }

    fn y(&self, v: f64) -> f64 {
        let plot_h = HEIGHT - TOP - BOTTOM;
        TOP + plot_h * (1.0 - (v.clamp(self.y_min, self.y_max) - self.y_min) / (self.y_max - self.y_min))
    }
}

fn header(out: &mut String, title: &str, y_label: &str, frame: &Frame) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        (WIDTH - RIGHT + LEFT) / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (TOP + HEIGHT - BOTTOM) / 2.0,
        escape(y_label)
    );
    for i in 0..=4 {
        let v = frame.y_min + (frame.y_max - frame.y_min) * i as f64 / 4.0;
        let y = frame.y(v);
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" x2="{:.1}" y1="{y:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            WIDTH - RIGHT,
            LEFT - 4.0,
            y + 4.0,
            tick_label(v)
        );
    }
    let _ = writeln!(
        out,
        r#"<line x1="{LEFT}" x2="{LEFT}" y1="{TOP}" y2="{:.1}" stroke="black"/>"#,
        HEIGHT - BOTTOM
    );
}

fn tick_label(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.2}")
    }
}

fn legend(out: &mut String, names: &[String]) {
    for (i, name) in names.iter().enumerate() {
        let y = TOP + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            WIDTH - RIGHT + 12.0,
            y,
            PALETTE[i % PALETTE.len()],
            WIDTH - RIGHT + 26.0,
            y + 9.0,
            escape(name)
        );
    }
}

pub fn bar_chart_svg(chart: &BarChart) -> String {
    let frame = Frame::new(
        chart
            .groups
            .iter()
            .flat_map(|g| g.values.iter().map(|&(v, e)| v + e.unwrap_or(0.0))),
        chart.y_range,
    );
    let mut out = String::new();
    header(&mut out, &chart.title, &chart.y_label, &frame);
    let plot_w = WIDTH - LEFT - RIGHT;
    let slot = plot_w / chart.groups.len().max(1) as f64;
    let n_series = chart.series.len().max(1) as f64;
    let bar_w = 0.8 * slot / n_series;
    let base = frame.y(0.0f64.clamp(frame.y_min, frame.y_max));
    let label_every = (chart.groups.len() / 30).max(1);
    for (g, group) in chart.groups.iter().enumerate() {
        let x0 = LEFT + slot * g as f64 + 0.1 * slot;
        for (s, &(v, err)) in group.values.iter().enumerate() {
            if !v.is_finite() {
                continue;
            }
            let x = x0 + bar_w * s as f64;
            let y = frame.y(v);
            let _ = writeln!(
                out,
                r#"<rect x="{x:.2}" y="{:.2}" width="{bar_w:.2}" height="{:.2}" fill="{}"/>"#,
                y.min(base),
                (base - y).abs(),
                PALETTE[s % PALETTE.len()]
            );
            if let Some(e) = err.filter(|e| e.is_finite() && *e > 0.0) {
                let cx = x + bar_w / 2.0;
                let _ = writeln!(
                    out,
                    r#"<line x1="{cx:.2}" x2="{cx:.2}" y1="{:.2}" y2="{:.2}" stroke="black"/>"#,
                    frame.y(v - e),
                    frame.y(v + e)
                );
            }
        }
        if g % label_every == 0 {
            let cx = LEFT + slot * (g as f64 + 0.5);
            let _ = writeln!(
                out,
                r#"<text transform="translate({cx:.1} {:.1}) rotate(-60)" text-anchor="end" font-size="9">{}</text>"#,
                HEIGHT - BOTTOM + 10.0,
                escape(&group.label)
            );
        }
    }
    let _ = writeln!(
        out,
        r#"<line x1="{LEFT}" x2="{:.1}" y1="{base:.1}" y2="{base:.1}" stroke="black"/>"#,
        WIDTH - RIGHT
    );
    legend(&mut out, &chart.series);
    out.push_str("</svg>\n");
    out
}

pub fn line_chart_svg(chart: &LineChart) -> String {
    let frame = Frame::new(chart.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)), chart.y_range);
    let (x_min, x_max) = chart
        .series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    let (x_min, x_max) = if x_min.is_finite() && x_max > x_min { (x_min, x_max) } else { (0.0, 1.0) };
    let plot_w = WIDTH - LEFT - RIGHT;
    let px = |x: f64| LEFT + plot_w * (x - x_min) / (x_max - x_min);
    let mut out = String::new();
    header(&mut out, &chart.title, &chart.y_label, &frame);
    let _ = writeln!(
        out,
        r#"<line x1="{LEFT}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="black"/>"#,
        WIDTH - RIGHT,
        HEIGHT - BOTTOM,
        HEIGHT - BOTTOM
    );
    for i in 0..=4 {
        let x = x_min + (x_max - x_min) * i as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            px(x),
            HEIGHT - BOTTOM + 16.0,
            tick_label(x)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - BOTTOM + 36.0,
        escape(&chart.x_label)
    );
    for (s, series) in chart.series.iter().enumerate() {
        let color = PALETTE[s % PALETTE.len()];
        let pts: Vec<String> = series
            .points
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), frame.y(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        for p in &pts {
            let (x, y) = p.split_once(',').expect("formatted pair");
            let _ = writeln!(out, r#"<circle cx="{x}" cy="{y}" r="2.5" fill="{color}"/>"#);
        }
    }
    let names: Vec<String> = chart.series.iter().map(|s| s.name.clone()).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}
