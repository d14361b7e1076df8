//! Standalone SVG charts: ROC panels (one per class) and a grouped bar chart
//! of the headline metrics.

use std::fmt::Write;

use super::{ComparisonTable, EvalReport};

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const PANEL: f64 = 300.0;
const MARGIN: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn axes(out: &mut String, x0: f64, y0: f64, w: f64, h: f64) {
    let _ = write!(out, r##"<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="#333"/>"##);
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let (x, y) = (x0 + v * w, y0 + h - v * h);
        let _ = write!(
            out,
            r##"<line x1="{x}" y1="{y1}" x2="{x}" y2="{y2}" stroke="#333"/><text x="{x}" y="{ty}" font-size="10" text-anchor="middle">{v:.1}</text>"##,
            y1 = y0 + h,
            y2 = y0 + h + 4.0,
            ty = y0 + h + 16.0
        );
        let _ = write!(
            out,
            r##"<line x1="{x1}" y1="{y}" x2="{x0}" y2="{y}" stroke="#333"/><text x="{tx}" y="{ty}" font-size="10" text-anchor="end">{v:.1}</text>"##,
            x1 = x0 - 4.0,
            tx = x0 - 6.0,
            ty = y + 3.0
        );
    }
}

/// One panel per class with every model's one-vs-rest curve, the chance
/// diagonal, and a legend carrying each curve's AUC.
pub fn roc_svg(reports: &[(&str, &EvalReport)]) -> String {
    let classes = reports.iter().map(|(_, r)| r.roc.len()).max().unwrap_or(0).max(1);
    let cols = classes.min(2);
    let rows = classes.div_ceil(cols);
    let cell = PANEL + 2.0 * MARGIN;
    let (width, height) = (cols as f64 * cell, rows as f64 * cell + 20.0);
    let mut out = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    out += r#"<rect width="100%" height="100%" fill="white"/>"#;
    for k in 0..classes {
        let x0 = (k % cols) as f64 * cell + MARGIN;
        let y0 = (k / cols) as f64 * cell + MARGIN;
        let class = reports
            .iter()
            .find_map(|(_, r)| r.labels.get(k).cloned())
            .unwrap_or_else(|| k.to_string());
        let _ = write!(
            out,
            r#"<text x="{x}" y="{y}" font-size="13" text-anchor="middle">ROC: {} vs rest</text>"#,
            escape(&class),
            x = x0 + PANEL / 2.0,
            y = y0 - 12.0
        );
        axes(&mut out, x0, y0, PANEL, PANEL);
        let _ = write!(
            out,
            r##"<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y0}" stroke="#999" stroke-dasharray="4 4"/>"##,
            y1 = y0 + PANEL,
            x1 = x0 + PANEL
        );
        let _ = write!(
            out,
            r#"<text x="{x}" y="{y}" font-size="10" text-anchor="middle">false positive rate</text>"#,
            x = x0 + PANEL / 2.0,
            y = y0 + PANEL + 30.0
        );
        for (m, (name, report)) in reports.iter().enumerate() {
            let Some(curve) = report.roc.get(k) else { continue };
            let colour = PALETTE[m % PALETTE.len()];
            // thin the polyline to points that move at least 1/1000 of an axis
            let mut pts = String::new();
            let mut last: Option<(f64, f64)> = None;
            for (i, p) in curve.points.iter().enumerate() {
                let end = i + 1 == curve.points.len();
                if end || last.is_none_or(|(f, t)| (p.fpr - f).abs() >= 1e-3 || (p.tpr - t).abs() >= 1e-3) {
                    let _ = write!(pts, "{:.2},{:.2} ", x0 + p.fpr * PANEL, y0 + PANEL - p.tpr * PANEL);
                    last = Some((p.fpr, p.tpr));
                }
            }
            let _ = write!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
                pts.trim_end()
            );
            let ly = y0 + PANEL - 12.0 - 14.0 * (reports.len() - 1 - m) as f64;
            let _ = write!(
                out,
                r#"<line x1="{a}" y1="{ly}" x2="{b}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{t}" y="{ty}" font-size="11">{} (AUC {:.2})</text>"#,
                escape(name),
                curve.auc,
                a = x0 + PANEL * 0.45,
                b = x0 + PANEL * 0.45 + 16.0,
                t = x0 + PANEL * 0.45 + 20.0,
                ty = ly + 4.0
            );
        }
    }
    out += "</svg>\n";
    out
}

/// Accuracy and macro precision, recall, F1 and AUC, grouped by metric with
/// one bar per model.
pub fn metrics_svg(table: &ComparisonTable) -> String {
    let metrics: [(&str, fn(&super::ComparisonRow) -> f64); 5] = [
        ("accuracy", |r| r.accuracy),
        ("precision", |r| r.macro_precision),
        ("recall", |r| r.macro_recall),
        ("F1", |r| r.macro_f1),
        ("AUC", |r| r.macro_auc),
    ];
    let n_models = table.rows.len().max(1);
    let group = 20.0 * n_models as f64 + 30.0;
    let plot_w = group * metrics.len() as f64;
    let plot_h = 300.0;
    let (width, height) = (plot_w + 2.0 * MARGIN + 120.0, plot_h + 2.0 * MARGIN);
    let mut out = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    out += r#"<rect width="100%" height="100%" fill="white"/>"#;
    let _ = write!(
        out,
        r#"<text x="{x}" y="24" font-size="14" text-anchor="middle">Classifier comparison</text>"#,
        x = MARGIN + plot_w / 2.0
    );
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let y = MARGIN + plot_h - v * plot_h;
        let _ = write!(
            out,
            r##"<line x1="{MARGIN}" y1="{y}" x2="{x2}" y2="{y}" stroke="#ddd"/><text x="{tx}" y="{ty}" font-size="10" text-anchor="end">{v:.1}</text>"##,
            x2 = MARGIN + plot_w,
            tx = MARGIN - 6.0,
            ty = y + 3.0
        );
    }
    for (g, (label, value)) in metrics.iter().enumerate() {
        let gx = MARGIN + g as f64 * group + 15.0;
        for (m, row) in table.rows.iter().enumerate() {
            let v = value(row).clamp(0.0, 1.0);
            let _ = write!(
                out,
                r#"<rect x="{x}" y="{y}" width="18" height="{h}" fill="{c}"><title>{} {label}: {v:.4}</title></rect>"#,
                escape(&row.model),
                x = gx + 20.0 * m as f64,
                y = MARGIN + plot_h - v * plot_h,
                h = v * plot_h,
                c = PALETTE[m % PALETTE.len()]
            );
        }
        let _ = write!(
            out,
            r#"<text x="{x}" y="{y}" font-size="11" text-anchor="middle">{label}</text>"#,
            x = gx + 10.0 * n_models as f64,
            y = MARGIN + plot_h + 16.0
        );
    }
    let _ = write!(
        out,
        r##"<line x1="{MARGIN}" y1="{y}" x2="{x2}" y2="{y}" stroke="#333"/>"##,
        y = MARGIN + plot_h,
        x2 = MARGIN + plot_w
    );
    for (m, row) in table.rows.iter().enumerate() {
        let y = MARGIN + 14.0 * m as f64;
        let x = MARGIN + plot_w + 15.0;
        let _ = write!(
            out,
            r#"<rect x="{x}" y="{y}" width="10" height="10" fill="{c}"/><text x="{tx}" y="{ty}" font-size="11">{}</text>"#,
            escape(&row.model),
            c = PALETTE[m % PALETTE.len()],
            tx = x + 14.0,
            ty = y + 9.0
        );
    }
    out += "</svg>\n";
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{compare, evaluate_scores};

    #[test]
    fn charts_are_well_formed() {
        let truth = vec![0, 1, 2, 0, 1, 2];
        let scores: Vec<Vec<f64>> = truth.iter().map(|&t| (0..3).map(|k| if k == t { 0.7 } else { 0.15 }).collect()).collect();
        let r = evaluate_scores("a&b", &truth, &scores, 3).unwrap();
        let svg = roc_svg(&[("a&b", &r)]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a&amp;b (AUC 1.00)"));
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.contains("stroke-dasharray"));
        let bars = metrics_svg(&compare([("a&b", &r)]));
        assert_eq!(bars.matches("<title>").count(), 5);
    }
}
