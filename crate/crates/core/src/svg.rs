//! Minimal static SVG charts for the report command.

use std::fmt::Write as _;

const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#9c755f",
];

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Horizontal bars, one per `(label, value)`, scaled to the largest value.
pub fn bar_chart(title: &str, bars: &[(String, f64)]) -> String {
    let (label_w, bar_w, row_h) = (200.0, 400.0, 24.0);
    let height = 40.0 + row_h * bars.len() as f64;
    let max = bars.iter().map(|b| b.1).fold(0.0_f64, f64::max);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height}" font-family="sans-serif" font-size="12">"#,
        label_w + bar_w + 80.0
    );
    let _ = writeln!(out, r#"<text x="10" y="20" font-size="14">{}</text>"#, escape(title));
    for (i, (label, value)) in bars.iter().enumerate() {
        let y = 32.0 + row_h * i as f64;
        let w = if max > 0.0 { bar_w * value / max } else { 0.0 };
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            label_w - 6.0,
            y + 14.0,
            escape(label)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{label_w}" y="{y}" width="{w:.2}" height="{}" fill="{}"/>"#,
            row_h - 6.0,
            PALETTE[0]
        );
        let _ = writeln!(out, r#"<text x="{:.2}" y="{}">{value}</text>"#, label_w + w + 4.0, y + 14.0);
    }
    out.push_str("</svg>\n");
    out
}

/// One 100% stacked bar per group. `series` names the segments; each group's
/// values line up with it.
pub fn stacked_bar_chart(title: &str, series: &[String], groups: &[(String, Vec<f64>)]) -> String {
    let (label_w, bar_w, row_h) = (120.0, 420.0, 26.0);
    let legend_h = 18.0 * series.len() as f64;
    let height = 50.0 + row_h * groups.len() as f64 + legend_h;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height}" font-family="sans-serif" font-size="12">"#,
        label_w + bar_w + 20.0
    );
    let _ = writeln!(out, r#"<text x="10" y="20" font-size="14">{}</text>"#, escape(title));
    for (i, (group, values)) in groups.iter().enumerate() {
        let y = 32.0 + row_h * i as f64;
        let total: f64 = values.iter().sum();
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            label_w - 6.0,
            y + 15.0,
            escape(group)
        );
        let mut x = label_w;
        for (j, v) in values.iter().enumerate() {
            let w = if total > 0.0 { bar_w * v / total } else { 0.0 };
            let _ = writeln!(
                out,
                r#"<rect x="{x:.2}" y="{y}" width="{w:.2}" height="{}" fill="{}"><title>{} {:.3}</title></rect>"#,
                row_h - 6.0,
                PALETTE[j % PALETTE.len()],
                escape(series.get(j).map_or("", String::as_str)),
                v
            );
            x += w;
        }
    }
    let legend_y = 40.0 + row_h * groups.len() as f64;
    for (j, name) in series.iter().enumerate() {
        let y = legend_y + 18.0 * j as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{label_w}" y="{y}" width="12" height="12" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            PALETTE[j % PALETTE.len()],
            label_w + 18.0,
            y + 10.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}
