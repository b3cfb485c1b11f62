use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::args::Format;
use crate::error::{CliError, Result};

/// A report that can be rendered as JSON or as a CSV table.
pub trait Report: Serialize {
    fn csv_header(&self) -> Vec<&'static str>;
    fn csv_rows(&self) -> Vec<Vec<String>>;
}

pub fn render(report: &impl Report, format: Format) -> Result<String> {
    match format {
        Format::Json => {
            let mut text = serde_json::to_string_pretty(report).map_err(|e| CliError::Serialise(e.to_string()))?;
            text.push('\n');
            Ok(text)
        }
        Format::Csv => {
            let mut writer = csv::Writer::from_writer(Vec::new());
            let ser = |e: csv::Error| CliError::Serialise(e.to_string());
            writer.write_record(report.csv_header()).map_err(ser)?;
            for row in report.csv_rows() {
                writer.write_record(row).map_err(ser)?;
            }
            let bytes = writer.into_inner().map_err(|e| CliError::Serialise(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| CliError::Serialise(e.to_string()))
        }
    }
}

/// Writes the whole report or nothing: the file appears only once complete.
pub fn emit(path: Option<&Path>, body: &str) -> Result<()> {
    let Some(path) = path else {
        print!("{body}");
        return Ok(());
    };
    let io_err = |source| CliError::Io { path: path.to_path_buf(), source };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(body.as_bytes()).map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

pub fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
