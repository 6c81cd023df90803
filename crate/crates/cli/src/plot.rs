//! Minimal SVG inspection plots. Never read back by any command.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-300 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-size=\"14\" text-anchor=\"middle\">{title}</text>\n",
        WIDTH / 2.0
    )
}

/// Polylines over a shared x axis; `log_y` plots `log10 |y|`.
pub fn lines(title: &str, x: &[f64], series: &[Vec<f64>], log_y: bool) -> String {
    let tf = |v: f64| if log_y { v.abs().max(1e-300).log10() } else { v };
    let (x0, x1) = bounds(x.iter().copied());
    let (y0, y1) = bounds(series.iter().flatten().map(|&v| tf(v)));
    let px = |v: f64| MARGIN + (v - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |v: f64| HEIGHT - MARGIN - (tf(v) - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let mut svg = header(title);
    let _ = writeln!(
        svg,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>",
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let label = if log_y { "log10 |y|" } else { "y" };
    let _ = writeln!(
        svg,
        "<text x=\"6\" y=\"{}\" font-size=\"11\">{label} in [{y0:.3e}, {y1:.3e}]</text>",
        HEIGHT - 12.0
    );
    for (k, s) in series.iter().enumerate() {
        let pts: Vec<String> = x
            .iter()
            .zip(s)
            .map(|(&a, &b)| format!("{:.2},{:.2}", px(a), py(b)))
            .collect();
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>",
            PALETTE[k % PALETTE.len()],
            pts.join(" ")
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Disk heatmap: one colored dot per node, blue (low) to red (high).
pub fn heatmap(title: &str, points: &[[f64; 2]], values: &[f64]) -> String {
    let (lo, hi) = bounds(values.iter().copied());
    let scale = (HEIGHT - 2.0 * MARGIN) / 2.0;
    let (cx, cy) = (WIDTH / 2.0, HEIGHT / 2.0 + 10.0);
    let mut svg = header(title);
    let _ = writeln!(
        svg,
        "<circle cx=\"{cx}\" cy=\"{cy}\" r=\"{scale}\" fill=\"none\" stroke=\"#888\"/>"
    );
    for (p, &v) in points.iter().zip(values) {
        let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
        let (r, b) = ((255.0 * t) as u8, (255.0 * (1.0 - t)) as u8);
        let _ = writeln!(
            svg,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"rgb({r},64,{b})\"/>",
            cx + scale * p[0],
            cy - scale * p[1]
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"6\" y=\"{}\" font-size=\"11\">range [{lo:.3e}, {hi:.3e}]</text>",
        HEIGHT - 12.0
    );
    svg.push_str("</svg>\n");
    svg
}
