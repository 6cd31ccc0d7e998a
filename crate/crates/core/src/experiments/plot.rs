//! Standalone SVG line charts of accuracy against SNR.

use std::fmt::Write as _;

use super::table::ResultTable;
use crate::error::{invalid, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: [f64; 4] = [30.0, 130.0, 50.0, 60.0]; // top, right, bottom, left
const COLORS: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// One polyline per series of trial-averaged accuracies, with the series key
/// (and `d_ij` for pairs) in the legend.
pub fn accuracy_chart(table: &ResultTable, title: &str) -> Result<String> {
    let series = table.series();
    let curves: Vec<(String, Vec<(f64, f64)>)> = series
        .iter()
        .map(|(exp, key)| {
            let label = match table.rows.iter().find(|r| &r.experiment == exp && &r.subset_or_pair == key).and_then(|r| r.d_ij) {
                Some(d) => format!("{key} (d={d:.3})"),
                None if exp == "sweep" => format!("M = {key}"),
                None => key.clone(),
            };
            (label, table.curve(exp, key))
        })
        .filter(|(_, c)| !c.is_empty())
        .collect();
    if curves.is_empty() {
        return Err(invalid("table has no aggregate rows to plot"));
    }
    let xs = curves.iter().flat_map(|(_, c)| c.iter().map(|p| p.0));
    let (mut lo, mut hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if lo == hi {
        lo -= 1.0;
        hi += 1.0;
    }
    let [top, right, bottom, left] = MARGIN;
    let plot_w = WIDTH - left - right;
    let plot_h = HEIGHT - top - bottom;
    let px = |x: f64| left + (x - lo) / (hi - lo) * plot_w;
    let py = |y: f64| top + (1.0 - y) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        left + plot_w / 2.0,
        escape(title)
    );
    for k in 0..=5 {
        let y = k as f64 / 5.0;
        let _ = writeln!(
            svg,
            r##"<line x1="{left}" y1="{0:.1}" x2="{1:.1}" y2="{0:.1}" stroke="#ddd"/><text x="{2:.1}" y="{3:.1}" text-anchor="end">{y:.1}</text>"##,
            py(y),
            left + plot_w,
            left - 6.0,
            py(y) + 4.0
        );
    }
    let ticks = 6;
    for k in 0..=ticks {
        let x = lo + (hi - lo) * k as f64 / ticks as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{x:.0}</text>"#,
            px(x),
            top + plot_h + 16.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">SNR (dB)</text>"#,
        left + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">accuracy</text>"#,
        top + plot_h / 2.0
    );
    for (i, (label, pts)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            path.join(" ")
        );
        let ly = top + 10.0 + 18.0 * i as f64;
        let lx = left + plot_w + 10.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
