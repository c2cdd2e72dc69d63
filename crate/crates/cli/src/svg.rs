//! Structural SVG charts. Every mark carries `data-*` attributes with the
//! values it encodes so tests can inspect charts without rasterizing.

use std::fmt::Write;

use panel_bias::stats::EcdfPoint;
use panel_bias::variability::SigmaModel;

use crate::format::{num, EstimateRow};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const SIGNIFICANT: &str = "#08306b";
const PLAIN: &str = "#9ecae1";

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Scale {
    lo: f64,
    hi: f64,
    from: f64,
    to: f64,
}

impl Scale {
    fn new(values: impl Iterator<Item = f64>, from: f64, to: f64) -> Self {
        let (mut lo, mut hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.05 * (hi - lo);
        Scale { lo: lo - pad, hi: hi + pad, from, to }
    }

    fn map(&self, v: f64) -> f64 {
        self.from + (v - self.lo) / (self.hi - self.lo) * (self.to - self.from)
    }
}

struct Chart {
    body: String,
    x: Scale,
    y: Scale,
}

impl Chart {
    fn new(x: Scale, y: Scale) -> Self {
        Chart { body: String::new(), x, y }
    }

    fn finish(self, kind: &str, title: &str, x_label: &str, y_label: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" data-kind="{kind}" data-x-min="{}" data-x-max="{}" data-y-min="{}" data-y-max="{}">"#,
            num(self.x.lo),
            num(self.x.hi),
            num(self.y.lo),
            num(self.y.hi)
        );
        let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
        let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
        let _ = writeln!(s, r##"<line class="axis" x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="#333"/>"##);
        let _ = writeln!(s, r##"<line class="axis" x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="#333"/>"##);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 12.0, escape(x_label));
        let _ = writeln!(
            s,
            r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(y_label)
        );
        s.push_str(&self.body);
        s.push_str("</svg>\n");
        s
    }

    fn px(&self, x: f64) -> String {
        format!("{:.2}", self.x.map(x))
    }

    fn py(&self, y: f64) -> String {
        format!("{:.2}", self.y.map(y))
    }
}

fn x_scale(values: impl Iterator<Item = f64>) -> Scale {
    Scale::new(values, MARGIN, WIDTH - MARGIN)
}

fn y_scale(values: impl Iterator<Item = f64>) -> Scale {
    Scale::new(values, HEIGHT - MARGIN, MARGIN)
}

/// Fitted σ curves, one path per group over its fit domain.
pub fn sigma_curves(models: &[&SigmaModel]) -> String {
    const STEPS: usize = 60;
    let curve = |m: &SigmaModel| -> Vec<(f64, f64)> {
        let (lo, hi) = m.fit_domain;
        (0..=STEPS).map(|i| lo + (hi - lo) * i as f64 / STEPS as f64).map(|c| (c, m.evaluate(c))).collect()
    };
    let all: Vec<(f64, f64)> = models.iter().flat_map(|m| curve(m)).collect();
    let mut chart = Chart::new(x_scale(all.iter().map(|p| p.0)), y_scale(all.iter().map(|p| p.1).chain([0.0])));
    for m in models {
        let d: Vec<String> = curve(m).iter().map(|&(c, s)| format!("{},{}", chart.px(c), chart.py(s))).collect();
        let _ = writeln!(
            chart.body,
            r##"<polyline class="sigma-curve" data-group="{}" data-alpha="{}" data-beta="{}" data-gamma="{}" data-c-min="{}" data-c-max="{}" fill="none" stroke="#08519c" points="{}"/>"##,
            escape(&m.group_key.to_string()),
            num(m.alpha),
            num(m.beta),
            num(m.gamma),
            num(m.fit_domain.0),
            num(m.fit_domain.1),
            d.join(" ")
        );
    }
    chart.finish("sigma", "Intrinsic judging error variability", "control score", "sigma")
}

/// Bias estimates against their number of same-nationality marks;
/// estimates with `p < alpha` are drawn dark.
pub fn scatter(rows: &[EstimateRow], alpha: f64) -> String {
    let mut chart = Chart::new(x_scale(rows.iter().map(|r| r.n_sn_marks as f64)), y_scale(rows.iter().map(|r| r.beta_sn).chain([0.0])));
    let _ = writeln!(
        chart.body,
        r##"<line class="zero" x1="{MARGIN}" x2="{}" y1="{y}" y2="{y}" stroke="#999" stroke-dasharray="4"/>"##,
        WIDTH - MARGIN,
        y = chart.py(0.0)
    );
    for r in rows {
        let sig = r.p_sn < alpha;
        let _ = writeln!(
            chart.body,
            r#"<circle class="estimate{}" data-key="{}" data-stage="{}" data-x="{}" data-y="{}" data-p="{}" data-significant="{sig}" cx="{}" cy="{}" r="4" fill="{}"/>"#,
            if sig { " significant" } else { "" },
            escape(&r.key),
            escape(&r.stage),
            r.n_sn_marks,
            num(r.beta_sn),
            num(r.p_sn),
            chart.px(r.n_sn_marks as f64),
            chart.py(r.beta_sn),
            if sig { SIGNIFICANT } else { PLAIN }
        );
    }
    chart.finish("scatter", "Same-nationality bias estimates", "same-nationality marks", "beta_sn")
}

/// Confidence intervals, one row per estimate, sorted as given.
pub fn forest(rows: &[EstimateRow], alpha: f64) -> String {
    let mut chart =
        Chart::new(x_scale(rows.iter().flat_map(|r| [r.ci_lo, r.ci_hi]).chain([0.0])), y_scale((0..rows.len().max(1)).map(|i| i as f64)));
    let _ = writeln!(
        chart.body,
        r##"<line class="zero" x1="{x}" x2="{x}" y1="{MARGIN}" y2="{}" stroke="#999" stroke-dasharray="4"/>"##,
        HEIGHT - MARGIN,
        x = chart.px(0.0)
    );
    for (i, r) in rows.iter().enumerate() {
        let sig = r.p_sn < alpha;
        let y = chart.py(i as f64);
        let colour = if sig { SIGNIFICANT } else { PLAIN };
        let _ = writeln!(
            chart.body,
            r#"<g class="interval" data-key="{}" data-estimate="{}" data-lo="{}" data-hi="{}" data-significant="{sig}"><line x1="{}" x2="{}" y1="{y}" y2="{y}" stroke="{colour}"/><circle cx="{}" cy="{y}" r="3" fill="{colour}"/></g>"#,
            escape(&r.key),
            num(r.beta_sn),
            num(r.ci_lo),
            num(r.ci_hi),
            chart.px(r.ci_lo),
            chart.px(r.ci_hi),
            chart.px(r.beta_sn)
        );
    }
    chart.finish("forest", "95% confidence intervals", "beta_sn", "estimate")
}

pub fn ecdf(points: &[EcdfPoint]) -> String {
    let mut chart = Chart::new(x_scale(points.iter().map(|p| p.x)), y_scale([0.0, 1.0].into_iter()));
    let mut d = Vec::new();
    let mut prev = 0.0;
    for p in points {
        d.push(format!("{},{}", chart.px(p.x), chart.py(prev)));
        d.push(format!("{},{}", chart.px(p.x), chart.py(p.cumulative)));
        prev = p.cumulative;
    }
    let _ = writeln!(chart.body, r##"<polyline class="ecdf" fill="none" stroke="#08519c" points="{}"/>"##, d.join(" "));
    for p in points {
        let _ = writeln!(
            chart.body,
            r##"<circle class="step" data-x="{}" data-f="{}" cx="{}" cy="{}" r="2" fill="#08519c"/>"##,
            num(p.x),
            num(p.cumulative),
            chart.px(p.x),
            chart.py(p.cumulative)
        );
    }
    chart.finish("ecdf", "Weighted empirical distribution of bias estimates", "beta_sn", "F")
}
