//! Minimal standalone SVG plots: a scatter for score agreement and a bar
//! histogram for per-group correlation distributions. Output is plain text
//! with fixed-precision coordinates, so identical inputs give identical
//! bytes.

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in values {
        min = min.min(v);
        max = max.max(v);
    }
    if !min.is_finite() || !max.is_finite() {
        return (0.0, 1.0);
    }
    if min == max {
        return (min - 1.0, max + 1.0);
    }
    let pad = (max - min) * 0.05;
    (min - pad, max + pad)
}

fn header(title: &str) -> String {
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{tx:.1}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{title}</text>\n"
        ),
        w = WIDTH,
        h = HEIGHT,
        tx = WIDTH / 2.0,
        title = escape(title),
    )
}

fn axes(x_label: &str, y_label: &str) -> String {
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    format!(
        concat!(
            "<rect x=\"{m:.1}\" y=\"{m:.1}\" width=\"{pw:.1}\" height=\"{ph:.1}\" ",
            "fill=\"none\" stroke=\"black\"/>\n",
            "<text x=\"{cx:.1}\" y=\"{bx:.1}\" text-anchor=\"middle\">{xl}</text>\n",
            "<text x=\"16\" y=\"{cy:.1}\" text-anchor=\"middle\" ",
            "transform=\"rotate(-90 16 {cy:.1})\">{yl}</text>\n"
        ),
        m = MARGIN,
        pw = plot_w,
        ph = plot_h,
        cx = MARGIN + plot_w / 2.0,
        bx = HEIGHT - 12.0,
        cy = MARGIN + plot_h / 2.0,
        xl = escape(x_label),
        yl = escape(y_label),
    )
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// One dot per point; axes scaled to the data with 5% padding.
pub fn scatter_svg(points: &[(f64, f64)], x_label: &str, y_label: &str, title: &str) -> String {
    let (xmin, xmax) = bounds(points.iter().map(|p| p.0));
    let (ymin, ymax) = bounds(points.iter().map(|p| p.1));
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let to_x = |v: f64| MARGIN + (v - xmin) / (xmax - xmin) * plot_w;
    let to_y = |v: f64| HEIGHT - MARGIN - (v - ymin) / (ymax - ymin) * plot_h;

    let mut svg = header(title);
    svg.push_str(&axes(x_label, y_label));
    for tick in 0..=4 {
        let fx = xmin + (xmax - xmin) * tick as f64 / 4.0;
        let fy = ymin + (ymax - ymin) * tick as f64 / 4.0;
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"10\">{fx:.3}</text>\n",
            to_x(fx),
            HEIGHT - MARGIN + 16.0,
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"10\">{fy:.3}</text>\n",
            MARGIN - 6.0,
            to_y(fy) + 4.0,
        ));
    }
    for (x, y) in points {
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"steelblue\" fill-opacity=\"0.6\"/>\n",
            to_x(*x),
            to_y(*y),
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// One bar per bin over [min, min + counts.len()·bin_width).
pub fn histogram_svg(
    counts: &[usize],
    min: f64,
    bin_width: f64,
    x_label: &str,
    title: &str,
) -> String {
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let peak = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let bar_w = plot_w / counts.len().max(1) as f64;

    let mut svg = header(title);
    svg.push_str(&axes(x_label, "group count"));
    for (i, &count) in counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let bar_h = count as f64 / peak * plot_h;
        svg.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
             fill=\"steelblue\" stroke=\"white\" stroke-width=\"0.5\"/>\n",
            MARGIN + i as f64 * bar_w,
            HEIGHT - MARGIN - bar_h,
            bar_w,
            bar_h,
        ));
    }
    for tick in 0..=4 {
        let value = min + counts.len() as f64 * bin_width * tick as f64 / 4.0;
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"10\">{value:.2}</text>\n",
            MARGIN + plot_w * tick as f64 / 4.0,
            HEIGHT - MARGIN + 16.0,
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"10\">{}</text>\n",
        MARGIN - 6.0,
        MARGIN + 4.0,
        counts.iter().copied().max().unwrap_or(0),
    ));
    svg.push_str("</svg>\n");
    svg
}
