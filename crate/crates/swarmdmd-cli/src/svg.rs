//! Minimal static SVG line charts for the emitted metric series. These are
//! plain files with no external assets, written deterministically.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use swarmdmd::metrics::MetricSeries;

const WIDTH: f64 = 840.0;
const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 78.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 48.0;
const MARGIN_BOTTOM: f64 = 56.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];
/// Values at or below this are clamped on the log axis.
const LOG_FLOOR: f64 = 1e-16;

enum YScale {
    Linear,
    Log,
}

fn plot_width() -> f64 {
    WIDTH - MARGIN_LEFT - MARGIN_RIGHT
}

fn plot_height() -> f64 {
    HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
}

/// Log-scale error chart; non-positive samples are clamped to the floor.
pub fn write_log_chart(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(&str, &MetricSeries)],
    marker: Option<f64>,
) -> io::Result<()> {
    write_chart(path, title, x_label, y_label, series, marker, YScale::Log)
}

/// Linear-scale chart for bounded observables.
pub fn write_linear_chart(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(&str, &MetricSeries)],
    marker: Option<f64>,
) -> io::Result<()> {
    write_chart(
        path,
        title,
        x_label,
        y_label,
        series,
        marker,
        YScale::Linear,
    )
}

fn write_chart(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(&str, &MetricSeries)],
    marker: Option<f64>,
    scale: YScale,
) -> io::Result<()> {
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    let y_of = |v: f64| match scale {
        YScale::Linear => v,
        YScale::Log => v.max(LOG_FLOOR).log10(),
    };
    for (_, s) in series {
        for (&t, &v) in s.times.iter().zip(&s.values) {
            x_min = x_min.min(t);
            x_max = x_max.max(t);
            let y = y_of(v);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if !x_min.is_finite() {
        x_min = 0.0;
        x_max = 1.0;
        y_min = 0.0;
        y_max = 1.0;
    }
    if x_max - x_min < 1e-12 {
        x_max = x_min + 1.0;
    }
    if y_max - y_min < 1e-12 {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let pad = 0.04 * (y_max - y_min);
    y_min -= pad;
    y_max += pad;

    let to_x = |t: f64| MARGIN_LEFT + (t - x_min) / (x_max - x_min) * plot_width();
    let to_y = |y: f64| MARGIN_TOP + (y_max - y) / (y_max - y_min) * plot_height();

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(
        out,
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"26\" font-family=\"sans-serif\" font-size=\"17\" text-anchor=\"middle\">{}</text>",
        WIDTH / 2.0,
        escape(title)
    );

    // Axes.
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let yb = HEIGHT - MARGIN_BOTTOM;
    let _ = writeln!(
        out,
        "<line x1=\"{x0:.1}\" y1=\"{yb:.1}\" x2=\"{x1:.1}\" y2=\"{yb:.1}\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        out,
        "<line x1=\"{x0:.1}\" y1=\"{MARGIN_TOP:.1}\" x2=\"{x0:.1}\" y2=\"{yb:.1}\" stroke=\"black\"/>"
    );

    // X ticks.
    for i in 0..=5 {
        let t = x_min + (x_max - x_min) * i as f64 / 5.0;
        let px = to_x(t);
        let _ = writeln!(
            out,
            "<line x1=\"{px:.1}\" y1=\"{yb:.1}\" x2=\"{px:.1}\" y2=\"{:.1}\" stroke=\"black\"/>",
            yb + 5.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{px:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{t:.2}</text>",
            yb + 20.0
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{}</text>",
        (x0 + x1) / 2.0,
        HEIGHT - 14.0,
        escape(x_label)
    );

    // Y ticks: decades for log scale, 5 even steps for linear.
    match scale {
        YScale::Log => {
            let lo = y_min.floor() as i64;
            let hi = y_max.ceil() as i64;
            for e in lo..=hi {
                let y = e as f64;
                if y < y_min || y > y_max {
                    continue;
                }
                let py = to_y(y);
                let _ = writeln!(
                    out,
                    "<line x1=\"{:.1}\" y1=\"{py:.1}\" x2=\"{x0:.1}\" y2=\"{py:.1}\" stroke=\"black\"/>",
                    x0 - 5.0
                );
                let _ = writeln!(
                    out,
                    "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">1e{e}</text>",
                    x0 - 9.0,
                    py + 4.0
                );
            }
        }
        YScale::Linear => {
            for i in 0..=5 {
                let y = y_min + (y_max - y_min) * i as f64 / 5.0;
                let py = to_y(y);
                let _ = writeln!(
                    out,
                    "<line x1=\"{:.1}\" y1=\"{py:.1}\" x2=\"{x0:.1}\" y2=\"{py:.1}\" stroke=\"black\"/>",
                    x0 - 5.0
                );
                let _ = writeln!(
                    out,
                    "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">{y:.2}</text>",
                    x0 - 9.0,
                    py + 4.0
                );
            }
        }
    }
    let _ = writeln!(
        out,
        "<text x=\"18\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.1})\">{}</text>",
        (MARGIN_TOP + yb) / 2.0,
        (MARGIN_TOP + yb) / 2.0,
        escape(y_label)
    );

    // Training-end marker.
    if let Some(t) = marker {
        if t >= x_min && t <= x_max {
            let px = to_x(t);
            let _ = writeln!(
                out,
                "<line x1=\"{px:.1}\" y1=\"{MARGIN_TOP:.1}\" x2=\"{px:.1}\" y2=\"{yb:.1}\" stroke=\"#888888\" stroke-dasharray=\"5,4\"/>"
            );
        }
    }

    // Series polylines and legend.
    for (idx, (label, s)) in series.iter().enumerate() {
        if s.is_empty() {
            continue;
        }
        let color = PALETTE[idx % PALETTE.len()];
        let mut points = String::new();
        for (&t, &v) in s.times.iter().zip(&s.values) {
            let _ = write!(points, "{:.2},{:.2} ", to_x(t), to_y(y_of(v)));
        }
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            points.trim_end()
        );
        let lx = x1 - 190.0;
        let ly = MARGIN_TOP + 10.0 + 18.0 * idx as f64;
        let _ = writeln!(
            out,
            "<rect x=\"{lx:.1}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{color}\"/>",
            ly - 10.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{ly:.1}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
            lx + 18.0,
            escape(label)
        );
    }
    let _ = writeln!(out, "</svg>");
    std::fs::write(path, out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use swarmdmd::metrics::MetricKind;

    #[test]
    fn charts_are_valid_svg_and_deterministic() {
        let s1 = MetricSeries::new(
            MetricKind::PositionError,
            vec![0.0, 1.0, 2.0],
            vec![1e-5, 1e-3, 0.0],
        )
        .unwrap();
        let s2 = MetricSeries::new(
            MetricKind::HeadingError,
            vec![0.0, 1.0, 2.0],
            vec![0.5, 0.25, 0.75],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.svg");
        let p2 = dir.path().join("b.svg");
        write_log_chart(
            &p1,
            "t&t",
            "time [s]",
            "err",
            &[("a", &s1), ("b", &s2)],
            Some(1.0),
        )
        .unwrap();
        write_log_chart(
            &p2,
            "t&t",
            "time [s]",
            "err",
            &[("a", &s1), ("b", &s2)],
            Some(1.0),
        )
        .unwrap();
        let a = std::fs::read_to_string(&p1).unwrap();
        let b = std::fs::read_to_string(&p2).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.contains("polyline"));
        assert!(a.contains("&amp;"));
        assert!(a.ends_with("</svg>\n"));

        let p3 = dir.path().join("c.svg");
        write_linear_chart(&p3, "obs", "time [s]", "value", &[("p", &s2)], None).unwrap();
        assert!(std::fs::read_to_string(&p3).unwrap().contains("polyline"));
    }
}
