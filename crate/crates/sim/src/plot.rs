//! Minimal SVG line plot with a logarithmic y axis.

use std::fmt::Write as _;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const MAX_POINTS: usize = 1500;
const FLOOR: f64 = 1e-16;

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub values: &'a [f64],
}

/// Render the series against `times` with a log₁₀ y axis spanning whole decades.
pub fn log_plot(title: &str, times: &[f64], series: &[Series]) -> String {
    let (t0, t1) = match (times.first(), times.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        (Some(&a), _) => (a, a + 1.0),
        _ => (0.0, 1.0),
    };
    let logs = |v: f64| v.max(FLOOR).log10();
    let all = series.iter().flat_map(|s| s.values.iter().copied()).filter(|v| v.is_finite());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(logs(v)), hi.max(logs(v)))
    });
    let (lo, hi) = if lo.is_finite() {
        (lo.floor(), hi.ceil().max(lo.floor() + 1.0))
    } else {
        (-1.0, 0.0)
    };
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let x = |t: f64| MARGIN_L + (t - t0) / (t1 - t0) * pw;
    let y = |v: f64| MARGIN_T + (hi - logs(v)) / (hi - lo) * ph;

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{title}</text>"#,
        WIDTH / 2.0
    )
    .unwrap();
    writeln!(
        svg,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    for d in (lo as i32)..=(hi as i32) {
        let yy = MARGIN_T + (hi - d as f64) / (hi - lo) * ph;
        writeln!(
            svg,
            r##"<line x1="{MARGIN_L}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"##,
            MARGIN_L + pw,
            MARGIN_L - 6.0,
            yy + 4.0
        )
        .unwrap();
    }
    for i in 0..=5 {
        let t = t0 + (t1 - t0) * i as f64 / 5.0;
        writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            x(t),
            MARGIN_T + ph + 18.0,
            format_tick(t)
        )
        .unwrap();
    }
    writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">t [s]</text>"#,
        MARGIN_L + pw / 2.0,
        HEIGHT - 10.0
    )
    .unwrap();

    let stride = times.len().div_ceil(MAX_POINTS).max(1);
    for (k, s) in series.iter().enumerate() {
        let mut pts = String::new();
        let n = times.len().min(s.values.len());
        for i in (0..n).step_by(stride).chain(n.checked_sub(1)) {
            if s.values[i].is_finite() {
                write!(pts, "{:.2},{:.2} ", x(times[i]), y(s.values[i])).unwrap();
            }
        }
        writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            s.color,
            pts.trim_end()
        )
        .unwrap();
        let ly = MARGIN_T + 16.0 + 16.0 * k as f64;
        writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            MARGIN_L + pw - 200.0,
            MARGIN_L + pw - 175.0,
            s.color,
            MARGIN_L + pw - 170.0,
            ly + 4.0,
            s.label
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

fn format_tick(t: f64) -> String {
    if (t - t.round()).abs() < 1e-9 {
        format!("{}", t.round())
    } else {
        format!("{t:.2}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_decades_and_polylines() {
        let t: Vec<f64> = (0..=3000).map(|i| i as f64 * 0.01).collect();
        let a: Vec<f64> = t.iter().map(|t| 3.0 * (-t).exp()).collect();
        let b: Vec<f64> = t.iter().map(|_| 0.0).collect();
        let svg = log_plot("errors", &t, &[
            Series { label: "a", color: "red", values: &a },
            Series { label: "b", color: "blue", values: &b },
        ]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(">1e0<") && svg.contains(">1e-16<"));
        let first = svg.split("points=\"").nth(1).unwrap();
        let count = first.split('"').next().unwrap().split(' ').count();
        assert!(count <= MAX_POINTS + 2);
    }
}
