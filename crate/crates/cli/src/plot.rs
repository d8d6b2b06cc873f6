//! Static SVG line charts of a study summary.

use std::fmt::Write as _;

use ensemble_calib::simulation::{Method, SummaryRow};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 130.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

const SERIES: [(Method, &str); 2] = [(Method::Naive, "#d62728"), (Method::Calibrated, "#1f77b4")];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Coverage,
    Width,
}

impl Metric {
    fn value(self, row: &SummaryRow) -> f64 {
        match self {
            Metric::Coverage => row.mean_coverage,
            Metric::Width => row.mean_width,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Metric::Coverage => "mean coverage",
            Metric::Width => "mean interval width",
        }
    }
}

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64) -> Self {
        if hi - lo > 1e-12 * hi.abs().max(1.0) {
            Self { lo, hi }
        } else {
            let pad = 0.5 * lo.abs().max(1.0) * 0.1;
            Self { lo: lo - pad, hi: hi + pad }
        }
    }

    fn map(&self, v: f64, from: f64, to: f64) -> f64 {
        from + (v - self.lo) / (self.hi - self.lo) * (to - from)
    }

    /// Widens the range to multiples of a 1-2-5 step giving about `n` intervals.
    fn rounded(self, n: usize) -> (Self, f64) {
        let raw = (self.hi - self.lo) / n as f64;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|&s| s >= raw * (1.0 - 1e-9)).unwrap_or(10.0 * mag);
        let lo = (self.lo / step + 1e-9).floor() * step;
        let hi = (self.hi / step - 1e-9).ceil() * step;
        (Self { lo, hi }, step)
    }

    fn ticks(&self, n: usize) -> Vec<f64> {
        (0..=n).map(|k| self.lo + (self.hi - self.lo) * k as f64 / n as f64).collect()
    }

    fn stepped(&self, step: f64) -> Vec<f64> {
        let n = ((self.hi - self.lo) / step).round() as usize;
        (0..=n).map(|k| self.lo + step * k as f64).collect()
    }
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

/// One chart of `metric` against the prior mean, one polyline per method.
/// `reference` draws a dashed horizontal line (the target coverage).
pub fn render(summary: &[SummaryRow], metric: Metric, reference: Option<f64>, title: &str) -> String {
    let xs = summary.iter().map(|r| r.prior_mean as f64);
    let ys = summary.iter().map(|r| metric.value(r)).chain(reference);
    let (xmin, xmax) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (mut ymin, mut ymax) = ys
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if metric == Metric::Coverage {
        ymin = ymin.min(0.0);
        ymax = ymax.max(1.0);
    } else {
        ymin = ymin.min(0.0);
    }
    if !ymin.is_finite() {
        (ymin, ymax) = (0.0, 1.0);
    }
    let x_axis = Axis::new(xmin, xmax);
    let (y_axis, y_step) = Axis::new(ymin, ymax).rounded(5);
    let (px0, px1) = (LEFT, WIDTH - RIGHT);
    let (py0, py1) = (HEIGHT - BOTTOM, TOP);
    let px = |v: f64| x_axis.map(v, px0, px1);
    let py = |v: f64| y_axis.map(v, py0, py1);

    let mut svg = String::new();
    let w = &mut svg;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(w, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        (px0 + px1) / 2.0,
        escape(title)
    );

    // frame, grid, ticks
    let _ = writeln!(
        w,
        r#"<rect x="{px0:.2}" y="{py1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        px1 - px0,
        py0 - py1
    );
    let x_ticks: Vec<f64> = {
        let mut t: Vec<f64> = summary.iter().map(|r| r.prior_mean as f64).collect();
        t.dedup();
        if t.len() > 11 {
            x_axis.ticks(10)
        } else {
            t
        }
    };
    for v in x_ticks {
        let x = px(v);
        let _ = writeln!(w, r#"<line x1="{x:.2}" y1="{py0:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, py0 + 5.0);
        let _ = writeln!(
            w,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            py0 + 18.0,
            tick_label(v)
        );
    }
    for v in y_axis.stepped(y_step) {
        let y = py(v);
        let _ = writeln!(w, r##"<line x1="{px0:.2}" y1="{y:.2}" x2="{px1:.2}" y2="{y:.2}" stroke="#e0e0e0"/>"##);
        let _ = writeln!(
            w,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            px0 - 6.0,
            y + 4.0,
            tick_label(v)
        );
    }
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">prior mean i</text>"#,
        (px0 + px1) / 2.0,
        HEIGHT - 18.0
    );
    let _ = writeln!(
        w,
        r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (py0 + py1) / 2.0,
        metric.label()
    );

    if let Some(r) = reference {
        let y = py(r);
        let _ = writeln!(
            w,
            r#"<line x1="{px0:.2}" y1="{y:.2}" x2="{px1:.2}" y2="{y:.2}" stroke="gray" stroke-dasharray="6 4"/>"#
        );
    }

    let mut legend_y = TOP + 10.0;
    for (method, color) in SERIES {
        let mut points: Vec<(f64, f64)> = summary
            .iter()
            .filter(|r| r.method == method && metric.value(r).is_finite())
            .map(|r| (r.prior_mean as f64, metric.value(r)))
            .collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let _ = writeln!(w, r#"<g class="series" data-method="{}">"#, method.as_str());
        if points.len() > 1 {
            let coords: Vec<String> = points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            let _ = writeln!(
                w,
                r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                coords.join(" ")
            );
        }
        for &(x, y) in &points {
            let _ = writeln!(w, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(x), py(y));
        }
        let _ = writeln!(w, "</g>");
        let lx = px1 + 12.0;
        let _ = writeln!(
            w,
            r#"<line x1="{lx:.2}" y1="{legend_y:.2}" x2="{:.2}" y2="{legend_y:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            w,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 26.0,
            legend_y + 4.0,
            method.as_str()
        );
        legend_y += 20.0;
    }
    if let Some(r) = reference {
        let lx = px1 + 12.0;
        let _ = writeln!(
            w,
            r#"<line x1="{lx:.2}" y1="{legend_y:.2}" x2="{:.2}" y2="{legend_y:.2}" stroke="gray" stroke-dasharray="6 4"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            w,
            r#"<text x="{:.2}" y="{:.2}">target {}</text>"#,
            lx + 26.0,
            legend_y + 4.0,
            tick_label(r)
        );
    }
    let _ = writeln!(w, "</svg>");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
