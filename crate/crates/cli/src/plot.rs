//! Minimal static SVG charts.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = if lo.abs() > 1e-12 { lo.abs() * 0.1 } else { 1.0 };
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn label(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 0.01 && v.abs() < 1e4) {
        format!("{v:.3}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    } else {
        format!("{v:.1e}")
    }
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }

    fn axes(&self, out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        let _ = write!(
            out,
            r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y1 - y0
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let xv = self.x.0 + f * (self.x.1 - self.x.0);
            let yv = self.y.0 + f * (self.y.1 - self.y.0);
            let (px, py) = (self.px(xv), self.py(yv));
            let _ = write!(
                out,
                r#"<line x1="{px}" y1="{y1}" x2="{px}" y2="{}" stroke="black"/><text x="{px}" y="{}" font-size="11" text-anchor="middle">{}</text>"#,
                y1 + 4.0,
                y1 + 17.0,
                label(xv)
            );
            let _ = write!(
                out,
                r#"<line x1="{}" y1="{py}" x2="{x0}" y2="{py}" stroke="black"/><text x="{}" y="{}" font-size="11" text-anchor="end">{}</text>"#,
                x0 - 4.0,
                x0 - 6.0,
                py + 4.0,
                label(yv)
            );
        }
        let _ = write!(
            out,
            r#"<text x="{}" y="24" font-size="15" text-anchor="middle">{}</text><text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text><text x="16" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            (x0 + x1) / 2.0,
            escape(title),
            (x0 + x1) / 2.0,
            H - 12.0,
            escape(xlabel),
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(ylabel)
        );
    }
}

fn legend(out: &mut String, names: &[&str]) {
    for (k, name) in names.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * k as f64;
        let _ = write!(
            out,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}" font-size="11">{}</text>"#,
            W - RIGHT + 12.0,
            y - 9.0,
            PALETTE[k % PALETTE.len()],
            W - RIGHT + 28.0,
            y,
            escape(name)
        );
    }
}

fn document(body: String) -> String {
    format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}"><rect width="100%" height="100%" fill="white"/>{body}</svg>
"#
    )
}

pub fn scatter(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    chart(title, xlabel, ylabel, series, false)
}

pub fn lines(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    chart(title, xlabel, ylabel, series, true)
}

fn chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series], joined: bool) -> String {
    let all = || series.iter().flat_map(|s| s.points.iter());
    let frame = Frame {
        x: range(all().map(|p| p.0)),
        y: range(all().map(|p| p.1)),
    };
    let mut out = String::new();
    frame.axes(&mut out, title, xlabel, ylabel);
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<(f64, f64)> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| (frame.px(x), frame.py(y)))
            .collect();
        if joined && pts.len() > 1 {
            let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = write!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                path.join(" ")
            );
        }
        for (x, y) in pts {
            let _ = write!(
                out,
                r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}" fill-opacity="0.7"/>"#
            );
        }
    }
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    legend(&mut out, &names);
    document(out)
}

pub fn bars(title: &str, ylabel: &str, items: &[(String, f64)]) -> String {
    let frame = Frame {
        x: (0.0, items.len().max(1) as f64),
        y: range(items.iter().map(|i| i.1).chain([0.0])),
    };
    let mut out = String::new();
    frame.axes(&mut out, title, "", ylabel);
    for (k, (_, v)) in items.iter().enumerate() {
        let (x0, x1) = (frame.px(k as f64 + 0.15), frame.px(k as f64 + 0.85));
        let (ya, yb) = (frame.py(*v), frame.py(0.0));
        let _ = write!(
            out,
            r#"<rect x="{x0:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
            ya.min(yb),
            x1 - x0,
            (ya - yb).abs(),
            PALETTE[k % PALETTE.len()]
        );
    }
    let names: Vec<&str> = items.iter().map(|i| i.0.as_str()).collect();
    legend(&mut out, &names);
    document(out)
}

/// Rows top to bottom, blue for negative and red for positive cells.
pub fn heatmap(title: &str, rows: &[String], cols: &[String], values: &[Vec<f64>]) -> String {
    let scale = values
        .iter()
        .flatten()
        .filter(|v| v.is_finite())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-12);
    let (x0, y0) = (LEFT + 40.0, TOP + 10.0);
    let cw = ((W - x0 - 20.0) / cols.len().max(1) as f64).min(40.0);
    let ch = ((H - y0 - 90.0) / rows.len().max(1) as f64).min(24.0);
    let mut out = String::new();
    let _ = write!(
        out,
        r#"<text x="{}" y="24" font-size="15" text-anchor="middle">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    for (r, row) in values.iter().enumerate() {
        let y = y0 + ch * r as f64;
        if rows.len() <= 40 {
            let _ = write!(
                out,
                r#"<text x="{}" y="{:.2}" font-size="9" text-anchor="end">{}</text>"#,
                x0 - 4.0,
                y + ch * 0.7,
                escape(&rows[r])
            );
        }
        for (c, v) in row.iter().enumerate() {
            let t = if v.is_finite() {
                (v / scale).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            let fade = (255.0 * (1.0 - t.abs())).round() as u8;
            let fill = if t >= 0.0 {
                format!("rgb(255,{fade},{fade})")
            } else {
                format!("rgb({fade},{fade},255)")
            };
            let _ = write!(
                out,
                r#"<rect x="{:.2}" y="{y:.2}" width="{cw:.2}" height="{ch:.2}" fill="{fill}"/>"#,
                x0 + cw * c as f64
            );
        }
    }
    let base = y0 + ch * values.len() as f64 + 12.0;
    for (c, name) in cols.iter().enumerate() {
        let x = x0 + cw * (c as f64 + 0.5);
        let _ = write!(
            out,
            r#"<text x="{x:.2}" y="{base:.2}" font-size="9" text-anchor="end" transform="rotate(-60 {x:.2} {base:.2})">{}</text>"#,
            escape(name)
        );
    }
    let _ = write!(
        out,
        r#"<text x="{}" y="{}" font-size="10" text-anchor="end">scale +/-{}</text>"#,
        W - 10.0,
        H - 8.0,
        label(scale)
    );
    document(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_well_formed_svg() {
        let s = vec![Series {
            name: "a<b".into(),
            points: vec![(0.0, 1.0), (1.0, 2.0), (2.0, f64::NAN)],
        }];
        for doc in [
            scatter("t", "x", "y", &s),
            lines("t", "x", "y", &s),
            bars("t", "y", &[("one".into(), 1.0), ("two".into(), -0.5)]),
            heatmap("h", &["r".into()], &["c1".into(), "c2".into()], &[vec![1.0, -1.0]]),
        ] {
            assert!(doc.starts_with("<svg") && doc.trim_end().ends_with("</svg>"));
            assert!(!doc.contains("NaN"));
            assert!(!doc.contains("a<b"));
        }
    }

    #[test]
    fn flat_ranges_are_padded() {
        let (lo, hi) = range([2.0, 2.0].into_iter());
        assert!(lo < 2.0 && hi > 2.0);
        assert_eq!(range(std::iter::empty()), (0.0, 1.0));
    }
}
