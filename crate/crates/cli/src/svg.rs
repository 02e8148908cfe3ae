//! Minimal SVG figures for the exported tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use shape_concepts::eval::RegionGrid;
use shape_concepts::topo::Bar;

const W: f64 = 640.0;
const H: f64 = 400.0;
const M: f64 = 40.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn open(height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{height}\" viewBox=\"0 0 {W} {height}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn axis_label(out: &mut String, x: f64, y: f64, text: &str) {
    writeln!(out, "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"12\" font-family=\"sans-serif\">{text}</text>").unwrap();
}

/// One horizontal bar per vertex over normalized time; the survivor runs to
/// the right edge.
pub fn barcode(bars: &[Bar]) -> String {
    let row = 4.0;
    let height = (2.0 * M + row * bars.len() as f64).max(120.0);
    let mut out = open(height);
    let span = W - 2.0 * M;
    let mut order: Vec<&Bar> = bars.iter().collect();
    order.sort_by(|a, b| {
        let da = a.death.unwrap_or(f64::INFINITY);
        let db = b.death.unwrap_or(f64::INFINITY);
        db.total_cmp(&da).then(a.vertex.cmp(&b.vertex))
    });
    for (i, b) in order.iter().enumerate() {
        let y = M + row * i as f64;
        let x0 = M + b.birth * span;
        let x1 = M + b.death.map_or(1.0, |d| d.min(1.0)) * span;
        let color = if b.death.is_none() { PALETTE[1] } else { PALETTE[0] };
        writeln!(
            out,
            "<line x1=\"{x0:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"{color}\" stroke-width=\"{:.1}\"/>",
            x1.max(x0 + 1.0),
            row * 0.7
        )
        .unwrap();
    }
    axis_label(&mut out, M, height - 12.0, "time 0");
    axis_label(&mut out, W - M - 30.0, height - 12.0, "1");
    out.push_str("</svg>\n");
    out
}

/// Annexations per step as a polyline.
pub fn curve(points: &[(f64, usize)]) -> String {
    let mut out = open(H);
    let max = points.iter().map(|p| p.1).max().unwrap_or(0).max(1) as f64;
    let pts: Vec<String> = points
        .iter()
        .map(|&(t, c)| format!("{:.2},{:.2}", M + t * (W - 2.0 * M), H - M - c as f64 / max * (H - 2.0 * M)))
        .collect();
    writeln!(
        out,
        "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>",
        PALETTE[0],
        pts.join(" ")
    )
    .unwrap();
    axis_label(&mut out, M, H - 12.0, "time");
    axis_label(&mut out, 4.0, M - 8.0, &format!("annexations (max {max})"));
    out.push_str("</svg>\n");
    out
}

/// Region grid cells shaded by majority label and weight, with the
/// embedded instances on top.
pub fn embedding(coords: &[[f64; 2]], labels: &[String], grid: &RegionGrid) -> String {
    let mut out = open(W);
    let color: BTreeMap<&str, &str> = {
        let mut ls: Vec<&str> = labels.iter().map(String::as_str).collect();
        ls.sort_unstable();
        ls.dedup();
        ls.into_iter().enumerate().map(|(i, l)| (l, PALETTE[i % PALETTE.len()])).collect()
    };
    let [x0, x1, y0, y1] = grid.bounds;
    let side = W - 2.0 * M;
    let px = |x: f64| M + (x - x0) / (x1 - x0) * side;
    let py = |y: f64| W - M - (y - y0) / (y1 - y0) * side;
    let cw = side / grid.resolution as f64;
    for cell in &grid.cells {
        writeln!(
            out,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{cw:.2}\" height=\"{cw:.2}\" fill=\"{}\" fill-opacity=\"{:.3}\"/>",
            px(cell.cx) - cw / 2.0,
            py(cell.cy) - cw / 2.0,
            color.get(cell.label.as_str()).copied().unwrap_or("#999999"),
            0.35 * cell.weight
        )
        .unwrap();
    }
    for (c, l) in coords.iter().zip(labels) {
        writeln!(
            out,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{}\" stroke=\"black\" stroke-width=\"0.5\"/>",
            px(c[0]),
            py(c[1]),
            color[l.as_str()]
        )
        .unwrap();
    }
    for (i, (l, c)) in color.iter().enumerate() {
        writeln!(
            out,
            "<text x=\"{M}\" y=\"{:.2}\" font-size=\"12\" font-family=\"sans-serif\" fill=\"{c}\">{}</text>",
            16.0 + 14.0 * i as f64,
            escape(l)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn barcode_has_one_line_per_bar() {
        let bars = vec![
            Bar {
                vertex: 0,
                birth: 0.0,
                death: None,
            },
            Bar {
                vertex: 1,
                birth: 0.0,
                death: Some(0.5),
            },
        ];
        let s = barcode(&bars);
        assert_eq!(s.matches("<line").count(), 2);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn labels_are_escaped() {
        assert_eq!(escape("a<b&c"), "a&lt;b&amp;c");
    }
}
