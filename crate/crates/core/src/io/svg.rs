//! SVG rendering: AU displacement arrows over the neutral face, and simple
//! line plots for tradeoff curves.

use nalgebra::DMatrix;

use super::IoError;
use crate::eval::VarianceCurve;
use crate::geometry::Template;
use crate::KEYPOINT_COUNT;

const NEUTRAL_COLOR: &str = "#888";
const DISPLACED_COLOR: &str = "#36c";
const ARROW_COLOR: &str = "#c33";

/// One action unit over the neutral face: neutral keypoints in one color,
/// displaced keypoints (`neutral + scale * au`) in another, with an arrow
/// between every pair whose displacement magnitude exceeds `threshold`
/// (standardized units, measured after scaling).
pub fn au_arrows_svg(
    template: &Template,
    au_column: &[f64],
    scale: f64,
    threshold: f64,
) -> Result<String, IoError> {
    if au_column.len() != 2 * KEYPOINT_COUNT {
        return Err(IoError::BadShape(format!(
            "AU column has {} entries, expected {}",
            au_column.len(),
            2 * KEYPOINT_COUNT
        )));
    }
    let (min_x, min_y, w, h) = bounds(template);
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{} {} {} {}\">\n",
        min_x - 0.15 * w,
        min_y - 0.15 * h,
        1.3 * w,
        1.3 * h
    ));
    let r = 0.006 * w.max(h);
    let stroke = 0.004 * w.max(h);
    for i in 0..KEYPOINT_COUNT {
        if !template.validity[i] {
            continue;
        }
        let [x, y] = template.coords[i];
        out.push_str(&format!(
            "  <circle cx=\"{x}\" cy=\"{y}\" r=\"{r}\" fill=\"{NEUTRAL_COLOR}\"/>\n"
        ));
        let dx = scale * au_column[2 * i];
        let dy = scale * au_column[2 * i + 1];
        if dx.hypot(dy) > threshold {
            let (tx, ty) = (x + dx, y + dy);
            out.push_str(&format!(
                "  <line x1=\"{x}\" y1=\"{y}\" x2=\"{tx}\" y2=\"{ty}\" stroke=\"{ARROW_COLOR}\" stroke-width=\"{stroke}\"/>\n"
            ));
            out.push_str(&format!(
                "  <circle cx=\"{tx}\" cy=\"{ty}\" r=\"{r}\" fill=\"{DISPLACED_COLOR}\"/>\n"
            ));
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// All AUs of a dictionary laid out in a grid, one arrow plot per cell.
pub fn au_gallery_svg(
    template: &Template,
    u_prime: &DMatrix<f64>,
    scale: f64,
    threshold: f64,
    columns: usize,
) -> Result<String, IoError> {
    if u_prime.nrows() != 2 * KEYPOINT_COUNT {
        return Err(IoError::BadShape(format!(
            "dictionary has {} rows, expected {}",
            u_prime.nrows(),
            2 * KEYPOINT_COUNT
        )));
    }
    let columns = columns.max(1);
    let n = u_prime.ncols();
    let rows = n.div_ceil(columns);
    let (min_x, min_y, w, h) = bounds(template);
    let cell_w = 1.3 * w;
    let cell_h = 1.45 * h;
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {} {}\">\n",
        columns as f64 * cell_w,
        rows as f64 * cell_h
    ));
    for j in 0..n {
        let cx = (j % columns) as f64 * cell_w + 0.15 * w - min_x;
        let cy = (j / columns) as f64 * cell_h + 0.25 * h - min_y;
        let col: Vec<f64> = u_prime.column(j).iter().copied().collect();
        let inner = au_arrows_svg(template, &col, scale, threshold)?;
        // strip the outer svg element and translate the cell into place
        let body: String = inner
            .lines()
            .filter(|l| !l.starts_with("<svg") && !l.starts_with("</svg"))
            .map(|l| format!("  {l}\n"))
            .collect();
        out.push_str(&format!("  <g transform=\"translate({cx} {cy})\">\n"));
        out.push_str(&format!(
            "    <text x=\"{}\" y=\"{}\" font-size=\"{}\">AU {}</text>\n",
            min_x,
            min_y - 0.08 * h,
            0.08 * h,
            j + 1
        ));
        out.push_str(&body);
        out.push_str("  </g>\n");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// A tradeoff curve as a polyline with labelled axes.
pub fn curve_svg(curve: &VarianceCurve, x_label: &str, y_label: &str) -> Result<String, IoError> {
    if curve.axis.len() != curve.ve.len() || curve.axis.is_empty() {
        return Err(IoError::BadShape("curve axis and values disagree".into()));
    }
    let (width, height, margin) = (480.0, 320.0, 48.0);
    let x_min = curve.axis.iter().cloned().fold(f64::INFINITY, f64::min);
    let x_max = curve.axis.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let y_min = curve.ve.iter().cloned().fold(f64::INFINITY, f64::min).min(0.0);
    let y_max = curve.ve.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(100.0);
    let x_span = (x_max - x_min).max(1e-9);
    let y_span = (y_max - y_min).max(1e-9);
    let to_px = |x: f64, y: f64| {
        (
            margin + (x - x_min) / x_span * (width - 2.0 * margin),
            height - margin - (y - y_min) / y_span * (height - 2.0 * margin),
        )
    };
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    let (x0, y0) = to_px(x_min, y_min);
    let (x1, y1) = to_px(x_max, y_max);
    out.push_str(&format!(
        "  <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"#000\"/>\n"
    ));
    out.push_str(&format!(
        "  <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"#000\"/>\n"
    ));
    let points: Vec<String> = curve
        .axis
        .iter()
        .zip(&curve.ve)
        .map(|(&x, &y)| {
            let (px, py) = to_px(x, y);
            format!("{px},{py}")
        })
        .collect();
    out.push_str(&format!(
        "  <polyline points=\"{}\" fill=\"none\" stroke=\"{DISPLACED_COLOR}\" stroke-width=\"2\"/>\n",
        points.join(" ")
    ));
    out.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        width / 2.0,
        height - 10.0,
        xml_escape(x_label)
    ));
    out.push_str(&format!(
        "  <text x=\"14\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 14 {})\">{}</text>\n",
        height / 2.0,
        height / 2.0,
        xml_escape(y_label)
    ));
    out.push_str(&format!(
        "  <text x=\"{x0}\" y=\"{}\" font-size=\"11\">{x_min}</text>\n",
        y0 + 16.0
    ));
    out.push_str(&format!(
        "  <text x=\"{x1}\" y=\"{}\" text-anchor=\"end\" font-size=\"11\">{x_max}</text>\n",
        y0 + 16.0
    ));
    out.push_str("</svg>\n");
    Ok(out)
}

fn bounds(template: &Template) -> (f64, f64, f64, f64) {
    let mut min_x = f64::INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for i in 0..KEYPOINT_COUNT {
        if template.validity[i] {
            let [x, y] = template.coords[i];
            min_x = min_x.min(x);
            min_y = min_y.min(y);
            max_x = max_x.max(x);
            max_y = max_y.max(y);
        }
    }
    if !min_x.is_finite() {
        return (0.0, 0.0, 1.0, 1.0);
    }
    (min_x, min_y, (max_x - min_x).max(1e-9), (max_y - min_y).max(1e-9))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_template() -> Template {
        let mut coords = [[0.0f64; 2]; KEYPOINT_COUNT];
        let mut validity = [true; KEYPOINT_COUNT];
        for i in 0..KEYPOINT_COUNT {
            coords[i] = [(i % 10) as f64, (i / 10) as f64];
        }
        validity[20] = false;
        Template { coords, validity }
    }

    #[test]
    fn zero_au_renders_markers_only() {
        let t = sample_template();
        let svg = au_arrows_svg(&t, &[0.0; 2 * KEYPOINT_COUNT], 3.0, 1e-6).unwrap();
        // one neutral marker per valid keypoint, no arrows, no displaced markers
        assert_eq!(svg.matches("<circle").count(), KEYPOINT_COUNT - 1);
        assert_eq!(svg.matches("<line").count(), 0);
        assert!(!svg.contains(DISPLACED_COLOR));
    }

    #[test]
    fn single_keypoint_au_renders_one_arrow() {
        let t = sample_template();
        let mut col = vec![0.0; 2 * KEYPOINT_COUNT];
        col[0] = 1.0;
        col[1] = -0.5;
        let svg = au_arrows_svg(&t, &col, 2.0, 0.1).unwrap();
        assert_eq!(svg.matches("<line").count(), 1);
        assert_eq!(svg.matches("<circle").count(), KEYPOINT_COUNT);
        assert!(svg.contains("x2=\"2\""), "arrow endpoint scaled: {svg}");

        assert!(au_arrows_svg(&t, &[0.0; 10], 1.0, 0.1).is_err());
    }

    #[test]
    fn threshold_suppresses_small_arrows() {
        let t = sample_template();
        let mut col = vec![0.0; 2 * KEYPOINT_COUNT];
        col[0] = 0.05;
        col[4] = 3.0;
        let svg = au_arrows_svg(&t, &col, 1.0, 0.5).unwrap();
        assert_eq!(svg.matches("<line").count(), 1);
    }

    #[test]
    fn output_is_deterministic() {
        let t = sample_template();
        let col = vec![0.25; 2 * KEYPOINT_COUNT];
        let a = au_arrows_svg(&t, &col, 1.5, 0.01).unwrap();
        let b = au_arrows_svg(&t, &col, 1.5, 0.01).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gallery_has_one_group_per_au() {
        let t = sample_template();
        let u = DMatrix::from_element(2 * KEYPOINT_COUNT, 5, 0.1);
        let svg = au_gallery_svg(&t, &u, 1.0, 0.01, 3).unwrap();
        assert_eq!(svg.matches("<g transform").count(), 5);
        assert!(svg.contains(">AU 5<"));
    }

    #[test]
    fn curve_svg_contains_all_points() {
        let curve = VarianceCurve {
            axis: vec![0.0, 1.0, 2.0],
            ve: vec![0.0, 60.0, 90.0],
            sample_count: 3,
        };
        let svg = curve_svg(&curve, "active AUs", "VE (%)").unwrap();
        assert!(svg.contains("<polyline"));
        assert_eq!(svg.matches("<text").count(), 4);
        let pts = svg.split("points=\"").nth(1).unwrap();
        let pts = &pts[..pts.find('"').unwrap()];
        assert_eq!(pts.split(' ').count(), 3);
    }
}
