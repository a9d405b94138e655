//! Minimal native SVG scatter/line plot, so reports need no plotting
//! dependency.

use std::fmt::Write as _;

const W: f64 = 520.0;
const H: f64 = 380.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 48.0;

fn nice_ticks(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    (0..=count)
        .map(|i| lo + span * i as f64 / count as f64)
        .collect()
}

/// Renders `points` as circles joined by a line (sorted by x), with axes and
/// tick labels. Returns the SVG document.
pub fn scatter_svg(points: &[(f64, f64)], x_label: &str, y_label: &str, title: &str) -> String {
    let (mut x_lo, mut x_hi) = (0.0f64, 1.0f64);
    let (mut y_lo, mut y_hi) = (0.0f64, 1.0f64);
    if !points.is_empty() {
        x_lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).min(0.0);
        x_hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        y_lo = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).min(0.0);
        y_hi = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        if (x_hi - x_lo).abs() < 1e-12 {
            x_hi = x_lo + 1.0;
        }
        if (y_hi - y_lo).abs() < 1e-12 {
            y_hi = y_lo + 1.0;
        }
        y_hi *= 1.05;
        x_hi += (x_hi - x_lo) * 0.05;
    }

    let px = |x: f64| MARGIN_L + (x - x_lo) / (x_hi - x_lo) * (W - MARGIN_L - MARGIN_R);
    let py = |y: f64| H - MARGIN_B - (y - y_lo) / (y_hi - y_lo) * (H - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">{}</text>\n",
        W / 2.0,
        title
    );

    // axes
    let _ = write!(
        svg,
        "<line x1=\"{MARGIN_L}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MARGIN_B,
        W - MARGIN_R,
        H - MARGIN_B,
        H - MARGIN_B
    );

    for t in nice_ticks(x_lo, x_hi, 5) {
        let x = px(t);
        let _ = write!(
            svg,
            "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"black\"/>\n\
             <text x=\"{x}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{t:.2}</text>\n",
            H - MARGIN_B,
            H - MARGIN_B + 5.0,
            H - MARGIN_B + 18.0
        );
    }
    for t in nice_ticks(y_lo, y_hi, 5) {
        let y = py(t);
        let _ = write!(
            svg,
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{MARGIN_L}\" y2=\"{y}\" stroke=\"black\"/>\n\
             <text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{t:.2}</text>\n",
            MARGIN_L - 5.0,
            MARGIN_L - 8.0,
            y + 3.0
        );
    }
    let _ = write!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n\
         <text x=\"16\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        (MARGIN_L + W - MARGIN_R) / 2.0,
        H - 10.0,
        x_label,
        H / 2.0,
        H / 2.0,
        y_label
    );

    let mut sorted: Vec<(f64, f64)> = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    if sorted.len() > 1 {
        let path: Vec<String> = sorted
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = write!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#4477aa\" stroke-width=\"1.5\"/>\n",
            path.join(" ")
        );
    }
    for &(x, y) in &sorted {
        let _ = write!(
            svg,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3.5\" fill=\"#cc3311\"/>\n",
            px(x),
            py(y)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes [`scatter_svg`] output to a file.
pub fn write_scatter_svg(
    path: &std::path::Path,
    points: &[(f64, f64)],
    x_label: &str,
    y_label: &str,
    title: &str,
) -> std::io::Result<()> {
    std::fs::write(path, scatter_svg(points, x_label, y_label, title))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_contains_points_and_axes() {
        let svg = scatter_svg(
            &[(0.1, 0.07), (0.5, 1.25), (0.95, 4.04)],
            "correlation",
            "confounding (nats)",
            "strength sweep",
        );
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("polyline"));
        assert!(svg.contains("confounding"));
    }

    #[test]
    fn empty_point_set_still_renders() {
        let svg = scatter_svg(&[], "x", "y", "empty");
        assert!(svg.contains("</svg>"));
    }
}
