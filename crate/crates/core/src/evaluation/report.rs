use std::fmt::Write as _;

use super::metrics::MetricsTable;
use crate::alignment::Strategy;

fn method_label(s: Strategy) -> &'static str {
    match s {
        Strategy::Stamp => "Stamp",
        Strategy::Frame => "Frame",
        Strategy::Target => "Target",
    }
}

/// Signed percent change: one decimal below 100%, whole percent above.
pub fn format_delta(pct: Option<f64>) -> String {
    match pct {
        None => "(n/a)".into(),
        Some(p) => {
            let one_decimal = format!("{:.1}", p.abs());
            let body = if one_decimal.parse::<f64>().unwrap_or(f64::INFINITY) < 100.0 {
                one_decimal
            } else {
                format!("{:.0}", p.abs())
            };
            let zero = body.chars().all(|c| c == '0' || c == '.');
            let sign = if p < 0.0 && !zero { '-' } else { '+' };
            format!("({sign}{body}%)")
        }
    }
}

fn with_delta(value: String, delta: Option<Option<f64>>) -> String {
    match delta {
        Some(d) => format!("{value} {}", format_delta(d)),
        None => value,
    }
}

/// Plain-text table: one row per strategy, IoU and recall to four decimals,
/// center offset to two, every non-baseline cell followed by its change
/// against the first row.
pub fn format_table(table: &MetricsTable) -> String {
    let mut header = vec!["Method".to_string(), "average IoU".to_string()];
    header.extend(table.thresholds.iter().map(|t| format!("Recall@IoU={t}")));
    header.push("center-offset (px)".into());

    let mut rows = vec![header];
    for row in &table.rows {
        let d = row.deltas.as_ref();
        let mut cells = vec![
            method_label(row.strategy).to_string(),
            with_delta(format!("{:.4}", row.average_iou), d.map(|d| d.average_iou)),
        ];
        for (i, r) in row.recall_at.iter().enumerate() {
            cells.push(with_delta(
                format!("{:.4}", r.recall),
                d.map(|d| d.recall_at.get(i).copied().flatten()),
            ));
        }
        let offset = row
            .mean_center_offset_px
            .map_or_else(|| "-".to_string(), |o| format!("{o:.2}"));
        cells.push(with_delta(offset, d.map(|d| d.mean_center_offset_px)));
        rows.push(cells);
    }

    let columns = rows[0].len();
    let widths: Vec<usize> = (0..columns)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let line: Vec<String> = r.iter().zip(&widths).map(|(cell, &w)| format!("{cell:<w$}")).collect();
        let _ = writeln!(out, "{}", line.join(" | ").trim_end());
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
            let _ = writeln!(out, "{}", rule.join("-+-"));
        }
    }
    out
}

/// Arrow-style change for LaTeX cells, e.g. `$(\uparrow20.3\%)$`.
pub fn format_delta_latex(pct: Option<f64>) -> String {
    let plain = format_delta(pct);
    let inner = &plain[1..plain.len() - 2];
    match inner.strip_prefix('-') {
        _ if pct.is_none() => "$(n/a)$".into(),
        Some(body) => format!("$(\\downarrow{body}\\%)$"),
        None => format!("$(\\uparrow{}\\%)$", &inner[1..]),
    }
}

/// Tabular body rows in LaTeX: header, then one `\midrule`-separated row
/// per strategy. Shading and emphasis are left to the document.
pub fn format_latex(table: &MetricsTable) -> String {
    let mut header = vec!["Method base".to_string(), "average IoU".to_string()];
    header.extend(table.thresholds.iter().map(|t| format!("Recall@IoU={t}")));
    header.push("center-offset (px)".into());

    let cell = |value: String, delta: Option<Option<f64>>| match delta {
        Some(d) => format!("{value} {}", format_delta_latex(d)),
        None => value,
    };
    let mut out = format!("{} \\\\\n", header.join(" & "));
    for row in &table.rows {
        let d = row.deltas.as_ref();
        let mut cells = vec![
            method_label(row.strategy).to_string(),
            cell(format!("{:.4}", row.average_iou), d.map(|d| d.average_iou)),
        ];
        for (i, r) in row.recall_at.iter().enumerate() {
            cells.push(cell(
                format!("{:.4}", r.recall),
                d.map(|d| d.recall_at.get(i).copied().flatten()),
            ));
        }
        let offset = row
            .mean_center_offset_px
            .map_or_else(|| "-".to_string(), |o| format!("{o:.2}"));
        cells.push(cell(offset, d.map(|d| d.mean_center_offset_px)));
        let _ = write!(out, "\\midrule\n{} \\\\\n", cells.join(" & "));
    }
    out
}
