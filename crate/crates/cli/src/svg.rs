//! Minimal polyline charts written as plain SVG text.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 48.0;

pub struct Chart<'a> {
    pub title: &'a str,
    pub xs: &'a [f64],
    /// Individual runs, drawn thin.
    pub runs: &'a [Vec<f64>],
    pub median: &'a [f64],
    pub sd: &'a [f64],
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn bounds(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if lo > hi {
        return None;
    }
    if hi - lo < 1e-12 {
        return Some((lo - 0.5, hi + 0.5));
    }
    Some((lo, hi))
}

/// Points of a polyline, breaking at non-finite values.
fn segments(
    xs: &[f64],
    ys: &[f64],
    px: &dyn Fn(f64) -> f64,
    py: &dyn Fn(f64) -> f64,
) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for (x, y) in xs.iter().zip(ys) {
        if y.is_finite() {
            let _ = write!(cur, "{:.2},{:.2} ", px(*x), py(*y));
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

pub fn render(chart: &Chart<'_>) -> String {
    let band = chart
        .median
        .iter()
        .zip(chart.sd)
        .flat_map(|(m, s)| [m - s, m + s]);
    let ys = chart.runs.iter().flatten().copied().chain(band);
    let (y_lo, y_hi) = bounds(ys).unwrap_or((0.0, 1.0));
    let (x_lo, x_hi) = bounds(chart.xs.iter().copied()).unwrap_or((0.0, 1.0));
    let px = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(chart.title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    for (label, x, y, anchor) in [
        (format!("{y_hi:.3}"), MARGIN - 4.0, MARGIN + 4.0, "end"),
        (format!("{y_lo:.3}"), MARGIN - 4.0, HEIGHT - MARGIN, "end"),
        (format!("{x_lo}"), MARGIN, HEIGHT - MARGIN + 16.0, "start"),
        (
            format!("{x_hi}"),
            WIDTH - MARGIN,
            HEIGHT - MARGIN + 16.0,
            "end",
        ),
    ] {
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{y:.2}" font-family="sans-serif" font-size="10" text-anchor="{anchor}">{label}</text>"#
        );
    }

    let finite: Vec<usize> = (0..chart.xs.len())
        .filter(|&i| chart.median[i].is_finite() && chart.sd[i].is_finite())
        .collect();
    if finite.len() > 1 {
        let mut pts = String::new();
        for &i in &finite {
            let _ = write!(
                pts,
                "{:.2},{:.2} ",
                px(chart.xs[i]),
                py(chart.median[i] + chart.sd[i])
            );
        }
        for &i in finite.iter().rev() {
            let _ = write!(
                pts,
                "{:.2},{:.2} ",
                px(chart.xs[i]),
                py(chart.median[i] - chart.sd[i])
            );
        }
        let _ = writeln!(
            s,
            r##"<polygon points="{}" fill="#4477aa" fill-opacity="0.2" stroke="none"/>"##,
            pts.trim_end()
        );
    }
    for run in chart.runs {
        for seg in segments(chart.xs, run, &px, &py) {
            let _ = writeln!(
                s,
                r##"<polyline points="{}" fill="none" stroke="#999999" stroke-width="0.8"/>"##,
                seg.trim_end()
            );
        }
    }
    for seg in segments(chart.xs, chart.median, &px, &py) {
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#224488" stroke-width="2"/>"##,
            seg.trim_end()
        );
    }
    s.push_str("</svg>\n");
    s
}
