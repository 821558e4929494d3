use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub section: String,
    pub slice: String,
    pub metric: String,
    pub value: f64,
    /// Items the value was computed over.
    pub n: usize,
}

/// Flat metric table. Metrics that could not be computed are left out.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "md" | "markdown" => Ok(Self::Markdown),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

impl EvalReport {
    pub fn push(&mut self, section: &str, slice: &str, metric: &str, value: f64, n: usize) {
        self.rows.push(ReportRow { section: section.into(), slice: slice.into(), metric: metric.into(), value, n });
    }

    pub fn extend(&mut self, other: EvalReport) {
        self.rows.extend(other.rows);
    }

    pub fn get(&self, section: &str, slice: &str, metric: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.section == section && r.slice == slice && r.metric == metric)
    }

    pub fn value(&self, section: &str, slice: &str, metric: &str) -> Option<f64> {
        self.get(section, slice, metric).map(|r| r.value)
    }

    pub fn emit(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Markdown => self.to_markdown(),
            ReportFormat::Csv => self.to_csv(),
        }
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| section | slice | metric | value | n |\n|---|---|---|---:|---:|\n");
        for r in &self.rows {
            let _ = writeln!(s, "| {} | {} | {} | {:.4} | {} |", r.section, r.slice, r.metric, r.value, r.n);
        }
        s
    }

    /// Values use the shortest representation that parses back to the same float.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(["section", "slice", "metric", "value", "n"]).expect("in-memory write");
        for r in &self.rows {
            w.serialize(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }

    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let rows = rdr
            .deserialize::<ReportRow>()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| EvalError::Report(e.to_string()))?;
        Ok(Self { rows })
    }
}

pub fn emit_report(report: &EvalReport, format: ReportFormat) -> String {
    report.emit(format)
}
