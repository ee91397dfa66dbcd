//! Static SVG heat maps.

use std::fmt::Write as _;

use mqa_core::numcore::Tensor;

const CELL: usize = 36;
const MARGIN: usize = 90;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Grey-to-red heat map of a matrix with values in `[0, 1]`.
pub fn heatmap_svg(m: &Tensor, rows: &[String], cols: &[String], title: &str) -> String {
    let (r, c) = m.dims2().expect("heat maps are 2-D");
    let (w, h) = (MARGIN + c * CELL + 10, MARGIN + r * CELL + 10);
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(out, r#"<text x="4" y="14">{}</text>"#, escape(title)).unwrap();
    for (j, label) in cols.iter().enumerate().take(c) {
        let x = MARGIN + j * CELL + CELL / 2;
        writeln!(
            out,
            r#"<text x="{x}" y="{}" text-anchor="end" transform="rotate(-45 {x} {})">{}</text>"#,
            MARGIN - 6,
            MARGIN - 6,
            escape(label)
        )
        .unwrap();
    }
    for i in 0..r {
        let y = MARGIN + i * CELL;
        let label = rows.get(i).map_or_else(|| i.to_string(), |s| escape(s));
        writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{label}</text>"#,
            MARGIN - 6,
            y + CELL / 2 + 4
        )
        .unwrap();
        for j in 0..c {
            let v = m.at(i, j).clamp(0.0, 1.0);
            let g = (255.0 * (1.0 - v)).round() as u8;
            writeln!(
                out,
                r##"<rect x="{}" y="{y}" width="{CELL}" height="{CELL}" fill="rgb(255,{g},{g})" stroke="#ccc"><title>{v:.4}</title></rect>"##,
                MARGIN + j * CELL
            )
            .unwrap();
        }
    }
    out.push_str("</svg>\n");
    out
}
