use serde::Serialize;

use super::ReportFormat;
use crate::error::Result;

/// One line of a per-method speedup report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub method: String,
    pub model: String,
    pub pages: usize,
    pub fp_mean: f64,
    pub tok_per_pass: f64,
    pub wall_ms: f64,
    pub cti_ms: f64,
    pub speedup_fp: f64,
    pub speedup_wall: f64,
}

pub const COLUMNS: [&str; 9] = [
    "method",
    "model",
    "pages",
    "fp_mean",
    "tok_per_pass",
    "wall_ms",
    "cti_ms",
    "speedup_fp",
    "speedup_wall",
];

impl BenchRow {
    fn cells(&self) -> [String; 9] {
        [
            self.method.clone(),
            self.model.clone(),
            self.pages.to_string(),
            format!("{:.2}", self.fp_mean),
            format!("{:.3}", self.tok_per_pass),
            format!("{:.3}", self.wall_ms),
            format!("{:.3}", self.cti_ms),
            format!("{:.3}", self.speedup_fp),
            format!("{:.3}", self.speedup_wall),
        ]
    }
}

pub fn emit_report(rows: &[BenchRow], format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Markdown => {
            let mut out = format!("| {} |\n", COLUMNS.join(" | "));
            out.push_str(&format!("|{}\n", "---|".repeat(COLUMNS.len())));
            for row in rows {
                out.push_str(&format!("| {} |\n", row.cells().join(" | ")));
            }
            Ok(out)
        }
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .quote_style(csv::QuoteStyle::Necessary)
                .from_writer(Vec::new());
            w.write_record(COLUMNS)?;
            for row in rows {
                w.write_record(row.cells())?;
            }
            let bytes = w
                .into_inner()
                .map_err(|e| csv::Error::from(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
    }
}
