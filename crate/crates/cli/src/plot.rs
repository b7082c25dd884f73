//! Minimal SVG line charts.

use std::fmt::Write;

pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

pub struct Chart {
    pub title: String,
    pub y_label: String,
    pub x_labels: Vec<String>,
    pub series: Vec<Series>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const W: f64 = 480.0;
const H: f64 = 320.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 120.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 48.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn y_range(charts: &Chart) -> (f64, f64) {
    let vals = charts.series.iter().flat_map(|s| s.values.iter().copied()).filter(|v| v.is_finite());
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let (lo, hi) = (lo.min(0.0), hi.max(0.0));
    let pad = ((hi - lo) * 0.08).max(1e-9);
    (lo - pad, hi + pad)
}

/// Charts laid out side by side in one SVG document.
pub fn render(charts: &[Chart]) -> String {
    let mut s = String::new();
    let total_w = W * charts.len().max(1) as f64;
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{H}" viewBox="0 0 {total_w} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (ci, chart) in charts.iter().enumerate() {
        let ox = ci as f64 * W;
        let (lo, hi) = y_range(chart);
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let n = chart.x_labels.len().max(1);
        let x_at = |i: usize| ox + LEFT + if n == 1 { pw / 2.0 } else { pw * i as f64 / (n - 1) as f64 };
        let y_at = |v: f64| TOP + ph * (hi - v) / (hi - lo);

        let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#, ox + LEFT + pw / 2.0, escape(&chart.title));
        let _ = writeln!(
            s,
            r##"<rect x="{}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##,
            ox + LEFT
        );
        for k in 0..=4 {
            let v = lo + (hi - lo) * k as f64 / 4.0;
            let y = y_at(v);
            let _ = writeln!(
                s,
                r##"<line x1="{}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">{v:.3}</text>"##,
                ox + LEFT,
                ox + LEFT + pw,
                ox + LEFT - 6.0,
                y + 4.0
            );
        }
        if lo < 0.0 && hi > 0.0 {
            let y = y_at(0.0);
            let _ = writeln!(s, r##"<line x1="{}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#888" stroke-dasharray="4 3"/>"##, ox + LEFT, ox + LEFT + pw);
        }
        for (i, label) in chart.x_labels.iter().enumerate() {
            let _ = writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#, x_at(i), TOP + ph + 16.0, escape(label));
        }
        let _ = writeln!(
            s,
            r#"<text transform="translate({},{}) rotate(-90)" text-anchor="middle">{}</text>"#,
            ox + 14.0,
            TOP + ph / 2.0,
            escape(&chart.y_label)
        );
        for (si, series) in chart.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            let pts: Vec<String> = series
                .values
                .iter()
                .enumerate()
                .filter(|(_, v)| v.is_finite())
                .map(|(i, v)| format!("{:.2},{:.2}", x_at(i), y_at(*v)))
                .collect();
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" "));
            for p in &pts {
                let (x, y) = p.split_once(',').expect("point");
                let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="3" fill="{color}"/>"#);
            }
            let ly = TOP + 12.0 + 16.0 * si as f64;
            let lx = ox + LEFT + pw + 10.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                lx + 16.0,
                lx + 20.0,
                ly + 4.0,
                escape(&series.name)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_one_polyline_per_series() {
        let chart = Chart {
            title: "gap <a&b>".into(),
            y_label: "loss".into(),
            x_labels: vec!["4x20".into(), "8x10".into()],
            series: vec![
                Series { name: "pap".into(), values: vec![1.0, 2.0] },
                Series { name: "specific".into(), values: vec![-0.5, f64::NAN] },
            ],
        };
        let svg = render(&[chart]);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("gap &lt;a&amp;b&gt;"));
        assert!(!svg.contains("NaN"));
    }
}
