//! `dsmil report`: comparison table from one or more report files, as plain
//! text and as comma-separated values. Metric cells are `mean ± std` rounded
//! to three decimals (round-half-even, the formatter's rounding).

use std::fs;
use std::path::Path;

use dsmil_core::error::{Error, Result};
use dsmil_core::eval::METRIC_NAMES;

use super::RunRecord;

#[derive(Debug)]
pub struct ReportTables {
    pub text: String,
    pub csv: String,
}

pub fn run_report(files: &[&Path]) -> Result<ReportTables> {
    if files.is_empty() {
        return Err(Error::Usage("report needs at least one report file".into()));
    }
    let mut rows: Vec<(String, Vec<String>)> = Vec::new();
    for path in files {
        let text = fs::read_to_string(path)?;
        let record: RunRecord = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let cells = METRIC_NAMES
            .iter()
            .map(|name| match record.report.fold_level.get(*name) {
                Some(summary) => format!("{:.3} ± {:.3}", summary.mean, summary.std),
                None => "n/a".to_string(),
            })
            .collect();
        rows.push((record.config.label.clone(), cells));
    }

    let mut header: Vec<String> = vec!["method".into()];
    header.extend(METRIC_NAMES.iter().map(|s| s.to_string()));

    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for (label, cells) in &rows {
        widths[0] = widths[0].max(label.len());
        for (i, cell) in cells.iter().enumerate() {
            widths[i + 1] = widths[i + 1].max(cell.len());
        }
    }

    let mut text = String::new();
    let fmt_row = |cols: Vec<&str>, widths: &[usize]| -> String {
        cols.iter()
            .enumerate()
            .map(|(i, c)| format!("{:<width$}", c, width = widths[i]))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    text.push_str(&fmt_row(header.iter().map(|s| s.as_str()).collect(), &widths));
    text.push('\n');
    for (label, cells) in &rows {
        let mut cols = vec![label.as_str()];
        cols.extend(cells.iter().map(|s| s.as_str()));
        text.push_str(&fmt_row(cols, &widths));
        text.push('\n');
    }

    let mut csv = header.join(",");
    csv.push('\n');
    for (label, cells) in &rows {
        csv.push_str(label);
        for cell in cells {
            csv.push(',');
            csv.push_str(cell);
        }
        csv.push('\n');
    }

    Ok(ReportTables { text, csv })
}
