use std::fmt::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::metrics::MetricsReport;

pub const TABLE_HEADER: [&str; 5] = ["Model", "Test Accuracy", "Test Precision", "Test Recall", "Test F1-Score"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            _ => Err(Error::Usage(format!("unknown format {s:?} (expected csv or markdown)"))),
        }
    }
}

fn same_task(reports: &[MetricsReport]) -> Result<()> {
    if let Some(first) = reports.first() {
        if let Some(other) = reports.iter().find(|r| r.task != first.task) {
            return Err(Error::Usage(format!("cannot tabulate {} and {} reports together", first.task, other.task)));
        }
    }
    Ok(())
}

/// One row per model with four-decimal scores.
pub fn emit_table(reports: &[MetricsReport], format: TableFormat) -> Result<String> {
    same_task(reports)?;
    let rows: Vec<[String; 5]> = reports
        .iter()
        .map(|r| {
            let s = &r.scores;
            [r.model.clone(), format!("{:.4}", s.accuracy), format!("{:.4}", s.precision), format!("{:.4}", s.recall), format!("{:.4}", s.f1)]
        })
        .collect();
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let err = |e: csv::Error| Error::Usage(e.to_string());
            w.write_record(TABLE_HEADER).map_err(err)?;
            for row in &rows {
                w.write_record(row).map_err(err)?;
            }
            out = String::from_utf8(w.into_inner().map_err(|e| Error::Usage(e.to_string()))?).expect("utf-8");
        }
        TableFormat::Markdown => {
            writeln!(out, "| {} |", TABLE_HEADER.join(" | ")).unwrap();
            writeln!(out, "|---|---:|---:|---:|---:|").unwrap();
            for row in &rows {
                writeln!(out, "| {} |", row.join(" | ")).unwrap();
            }
        }
    }
    Ok(out)
}

const METRIC_NAMES: [&str; 4] = ["Accuracy", "Precision", "Recall", "F1-Score"];
const METRIC_COLORS: [&str; 4] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Standalone SVG grouped bar chart: one group per model, one bar per metric.
pub fn render_chart(reports: &[MetricsReport]) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::Usage("a chart needs at least one report".into()));
    }
    let (left, top, plot_h, bar_w, gap) = (70.0, 40.0, 300.0, 22.0, 30.0);
    let group_w = 4.0 * bar_w + gap;
    let plot_w = group_w * reports.len() as f64;
    let (width, height) = (left + plot_w + 150.0, top + plot_h + 70.0);
    let base = top + plot_h;
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    let title = format!("Test metrics ({})", reports[0].task.title());
    writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, left + plot_w / 2.0, escape(&title)).unwrap();
    for tick in 0..=5 {
        let v = tick as f64 / 5.0;
        let y = base - v * plot_h;
        writeln!(s, r##"<line x1="{left}" y1="{y}" x2="{}" y2="{y}" stroke="#dddddd"/>"##, left + plot_w).unwrap();
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.1}</text>"#, left - 6.0, y + 4.0).unwrap();
    }
    writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{base}" stroke="black"/>"#).unwrap();
    writeln!(s, r#"<line x1="{left}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#, left + plot_w).unwrap();
    writeln!(s, r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">Score</text>"#, top + plot_h / 2.0, top + plot_h / 2.0).unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">Model</text>"#, left + plot_w / 2.0, height - 12.0).unwrap();
    for (g, r) in reports.iter().enumerate() {
        let x0 = left + gap / 2.0 + g as f64 * group_w;
        let values = [r.scores.accuracy, r.scores.precision, r.scores.recall, r.scores.f1];
        for (m, v) in values.iter().enumerate() {
            let h = v.clamp(0.0, 1.0) * plot_h;
            writeln!(
                s,
                r#"<rect class="bar" x="{}" y="{}" width="{bar_w}" height="{h}" fill="{}"><title>{} {}: {v:.4}</title></rect>"#,
                x0 + m as f64 * bar_w,
                base - h,
                METRIC_COLORS[m],
                escape(&r.model),
                METRIC_NAMES[m]
            )
            .unwrap();
        }
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, x0 + 2.0 * bar_w, base + 18.0, escape(&r.model)).unwrap();
    }
    let lx = left + plot_w + 20.0;
    for (m, name) in METRIC_NAMES.iter().enumerate() {
        let y = top + 10.0 + m as f64 * 20.0;
        writeln!(s, r#"<rect x="{lx}" y="{}" width="12" height="12" fill="{}"/>"#, y - 10.0, METRIC_COLORS[m]).unwrap();
        writeln!(s, r#"<text x="{}" y="{y}">{name}</text>"#, lx + 18.0).unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_chart(reports: &[MetricsReport], path: &Path) -> Result<()> {
    std::fs::write(path, render_chart(reports)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::metrics::{confusion, Averaging};
    use crate::eval::task::TaskSpec;

    fn report(name: &str, pred: &[usize]) -> MetricsReport {
        let task: TaskSpec = "four".parse().unwrap();
        let cm = confusion(&[0, 1, 2, 3], pred, 4).unwrap();
        MetricsReport::new(name, &task, "test", cm, Averaging::Macro).unwrap()
    }

    #[test]
    fn table_layout() {
        let rows = [report("CNN", &[0, 1, 2, 2]), report("CNN + ViT", &[0, 1, 2, 3])];
        let csv = emit_table(&rows, TableFormat::Csv).unwrap();
        assert_eq!(csv.lines().next().unwrap(), "Model,Test Accuracy,Test Precision,Test Recall,Test F1-Score");
        assert_eq!(csv.lines().nth(2).unwrap(), "CNN + ViT,1.0000,1.0000,1.0000,1.0000");
        let md = emit_table(&rows, TableFormat::Markdown).unwrap();
        assert!(md.starts_with("| Model | Test Accuracy | Test Precision | Test Recall | Test F1-Score |\n"));
        assert!(md.contains("| CNN | 0.7500 |"));
        assert_eq!(emit_table(&rows, TableFormat::Csv).unwrap(), csv);
        assert_eq!(emit_table(&[], TableFormat::Csv).unwrap().lines().count(), 1);
    }

    #[test]
    fn mixed_tasks_rejected() {
        let mut b = report("ViT", &[0, 1, 2, 3]);
        b.task = "three".parse().unwrap();
        assert!(matches!(emit_table(&[report("CNN", &[0, 1, 2, 3]), b], TableFormat::Csv), Err(Error::Usage(_))));
    }

    #[test]
    fn chart_has_one_bar_per_score() {
        let rows: Vec<_> = ["CNN", "ViT", "CNN + ViT", "ResNet"].iter().map(|n| report(n, &[0, 1, 2, 3])).collect();
        let svg = render_chart(&rows).unwrap();
        assert_eq!(svg.matches(r#"class="bar""#).count(), 16);
        assert_eq!(svg.matches(r#"height="300""#).count(), 16);
        assert_eq!(render_chart(&rows).unwrap(), svg);
        assert!(render_chart(&[]).is_err());
    }
}
