use super::bench::{format_g, BenchmarkRow, CSV_HEADER};
use serde_json::Value;
use std::fmt::Write;

/// Fixed-width text rendering of the CSV rows.
pub fn render_table(rows: &[BenchmarkRow]) -> String {
    let cells: Vec<[String; 9]> = rows
        .iter()
        .map(|r| {
            [
                r.setting.to_string(),
                r.n.to_string(),
                r.nodes.to_string(),
                r.important.to_string(),
                r.method.clone(),
                r.metric.clone(),
                format_g(r.mean),
                format_g(r.sd),
                r.repeats.to_string(),
            ]
        })
        .collect();
    let mut width: Vec<usize> = CSV_HEADER.iter().map(|h| h.len()).collect();
    for row in &cells {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, items: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> = items.zip(&width).map(|(s, w)| format!("{s:<w$}")).collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(&mut out, &mut CSV_HEADER.iter().copied());
    let rule: Vec<String> = width.iter().map(|&w| "-".repeat(w)).collect();
    line(&mut out, &mut rule.iter().map(String::as_str));
    for row in &cells {
        line(&mut out, &mut row.iter().map(String::as_str));
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// One bar per row (mean) with a ±sd whisker.
pub fn render_svg(rows: &[BenchmarkRow], provenance: &Value) -> String {
    const BAR: f64 = 36.0;
    const GAP: f64 = 18.0;
    const LEFT: f64 = 56.0;
    const TOP: f64 = 24.0;
    const PLOT_H: f64 = 240.0;
    const BOTTOM: f64 = 120.0;
    let y_max = rows.iter().map(|r| r.mean + r.sd).fold(1.0f64, f64::max);
    let width = LEFT + GAP + rows.len() as f64 * (BAR + GAP) + 16.0;
    let height = TOP + PLOT_H + BOTTOM;
    let y = |v: f64| TOP + PLOT_H * (1.0 - v.max(0.0) / y_max);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, "<metadata>{}</metadata>", escape(&provenance.to_string()));
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    for i in 0..=4 {
        let v = y_max * i as f64 / 4.0;
        let yy = y(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" x2="{:.1}" y1="{yy:.1}" y2="{yy:.1}" stroke="#dddddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            width - 16.0,
            LEFT - 6.0,
            yy + 4.0,
            format_g((v * 1000.0).round() / 1000.0)
        );
    }
    let _ = writeln!(s, r##"<line x1="{LEFT}" x2="{LEFT}" y1="{TOP}" y2="{:.1}" stroke="#333333"/>"##, TOP + PLOT_H);
    for (k, r) in rows.iter().enumerate() {
        let x = LEFT + GAP + k as f64 * (BAR + GAP);
        let top = y(r.mean);
        let fill = if r.method == "magnet" { "#4c72b0" } else { "#dd8452" };
        let _ = writeln!(
            s,
            r#"<rect x="{x:.1}" y="{top:.1}" width="{BAR}" height="{:.1}" fill="{fill}"><title>{} {}: {} ± {}</title></rect>"#,
            TOP + PLOT_H - top,
            escape(&r.method),
            escape(&r.metric),
            format_g(r.mean),
            format_g(r.sd)
        );
        if r.sd > 0.0 {
            let cx = x + BAR / 2.0;
            let (lo, hi) = (y(r.mean - r.sd), y(r.mean + r.sd));
            let _ = writeln!(
                s,
                r##"<path d="M{cx:.1} {lo:.1}V{hi:.1}M{:.1} {lo:.1}H{:.1}M{:.1} {hi:.1}H{:.1}" stroke="#222222" fill="none"/>"##,
                cx - 5.0,
                cx + 5.0,
                cx - 5.0,
                cx + 5.0
            );
        }
        let lx = x + BAR / 2.0;
        let ly = TOP + PLOT_H + 10.0;
        let _ = writeln!(
            s,
            r#"<text transform="translate({lx:.1} {ly:.1}) rotate(50)">{} {} (s{}, n={})</text>"#,
            escape(&r.method),
            escape(&r.metric),
            r.setting,
            r.n
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<BenchmarkRow> {
        ["accuracy", "rm"]
            .iter()
            .enumerate()
            .map(|(i, m)| BenchmarkRow {
                setting: 1,
                n: 250,
                nodes: 30,
                important: 20,
                method: "magnet".into(),
                metric: (*m).into(),
                mean: 0.5 + 0.1 * i as f64,
                sd: 0.05,
                repeats: 3,
            })
            .collect()
    }

    #[test]
    fn table_has_header_rule_and_rows() {
        let t = render_table(&rows());
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("setting  n    nodes"));
        assert!(lines[1].starts_with("-------"));
        assert!(lines[3].contains("rm") && lines[3].contains("0.6"));
    }

    #[test]
    fn svg_has_one_bar_per_row() {
        let svg = render_svg(&rows(), &serde_json::json!({"a": "<b>"}));
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<title>").count(), 2);
        assert!(svg.contains("&lt;b&gt;"));
    }
}
