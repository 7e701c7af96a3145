//! Bare-bones SVG line plots for quick inspection.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 200.0;
const PAD: f64 = 40.0;
const COLOURS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
/// Longest polyline drawn; longer series are decimated.
const MAX_POINTS: usize = 2000;

pub struct Series<'a> {
    pub label: &'a str,
    pub y: &'a [f64],
}

pub struct Panel<'a> {
    pub title: String,
    pub x: &'a [f64],
    pub series: Vec<Series<'a>>,
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Stacks the panels vertically, one plot each.
pub fn render(panels: &[Panel<'_>]) -> String {
    let total = HEIGHT * panels.len().max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{total}" font-family="sans-serif" font-size="11">"#
    );
    for (k, p) in panels.iter().enumerate() {
        let top = k as f64 * HEIGHT;
        let (x0, x1) = range(p.x.iter().copied());
        let (y0, y1) = range(p.series.iter().flat_map(|s| s.y.iter().copied()));
        let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * PAD);
        let sy = |y: f64| top + HEIGHT - PAD / 2.0 - (y - y0) / (y1 - y0) * (HEIGHT - 1.5 * PAD);
        let _ = writeln!(
            s,
            r#"<rect x="{PAD}" y="{}" width="{}" height="{}" fill="none" stroke="grey"/>"#,
            top + PAD,
            WIDTH - 2.0 * PAD,
            HEIGHT - 1.5 * PAD
        );
        let _ = writeln!(s, r#"<text x="{PAD}" y="{}">{}</text>"#, top + PAD - 6.0, p.title);
        let _ = writeln!(s, r#"<text x="2" y="{}">{y1:.3}</text>"#, top + PAD + 10.0);
        let _ = writeln!(s, r#"<text x="2" y="{}">{y0:.3}</text>"#, top + HEIGHT - PAD / 2.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">t = {x1:.3}</text>"#, WIDTH - PAD - 50.0, top + HEIGHT - 4.0);
        for (j, series) in p.series.iter().enumerate() {
            let colour = COLOURS[j % COLOURS.len()];
            let stride = (series.y.len() / MAX_POINTS).max(1);
            let mut pts = String::new();
            for (x, y) in p.x.iter().zip(series.y).step_by(stride) {
                if y.is_finite() {
                    let _ = write!(pts, "{:.1},{:.1} ", sx(*x), sy(*y));
                }
            }
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{colour}" stroke-width="1" points="{}"/>"#,
                pts.trim_end()
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" fill="{colour}">{}</text>"#,
                WIDTH - PAD - 120.0,
                top + PAD - 6.0 - 12.0 * j as f64,
                series.label
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
        let x = [0.0, 1.0, 2.0];
        let a = [0.0, 1.0, 0.0];
        let b = [1.0, 1.0, 1.0];
        let svg = render(&[Panel {
            title: "demo".into(),
            x: &x,
            series: vec![Series { label: "a", y: &a }, Series { label: "b", y: &b }],
        }]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
    }

    #[test]
    fn flat_and_empty_series_stay_finite() {
        let x = [0.0, 1.0];
        let y = [f64::NAN, f64::NAN];
        let svg = render(&[Panel {
            title: "empty".into(),
            x: &x,
            series: vec![Series { label: "nan", y: &y }],
        }]);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
