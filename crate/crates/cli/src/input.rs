//! CSV ingestion and export of datasets.

use std::path::Path;

use cwlate_core::RddDataset;

use crate::args::DataArgs;
use crate::error::{CliError, Result};

/// Separator between covariate values in an interacted cell label.
pub const CELL_SEPARATOR: &str = "|";

pub fn read_dataset(args: &DataArgs) -> Result<RddDataset> {
    let path = args.input.as_path();
    let csv_err = |source| CliError::Csv { path: path.to_path_buf(), source };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let column = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| CliError::Schema {
            path: path.to_path_buf(),
            message: format!("column `{name}` is not in the header"),
        })
    };
    let (iy, ix, iz) = (column(&args.y)?, column(&args.x)?, column(&args.z)?);
    let icells = args.cells.iter().map(|c| column(c)).collect::<Result<Vec<_>>>()?;

    let (mut y, mut x, mut z, mut cells) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<&str> {
            let raw = record.get(i).unwrap_or("").trim();
            if raw.is_empty() {
                return Err(CliError::Field {
                    path: path.to_path_buf(),
                    line,
                    field: headers[i].to_string(),
                    message: "missing value".into(),
                });
            }
            Ok(raw)
        };
        let number = |i: usize| -> Result<f64> {
            let raw = field(i)?;
            raw.parse::<f64>().map_err(|_| CliError::Field {
                path: path.to_path_buf(),
                line,
                field: headers[i].to_string(),
                message: format!("`{raw}` is not a number"),
            })
        };
        y.push(number(iy)?);
        x.push(number(ix)?);
        z.push(number(iz)?);
        let label = if icells.is_empty() {
            "all".to_string()
        } else {
            icells.iter().map(|&i| field(i)).collect::<Result<Vec<_>>>()?.join(CELL_SEPARATOR)
        };
        cells.push(label);
    }
    if y.is_empty() {
        return Err(CliError::Schema { path: path.to_path_buf(), message: "no data rows".into() });
    }
    Ok(RddDataset::new(y, x, z, cells, args.cutoff)?)
}

/// Writes `y,x,z,cell` with `z` on its original scale.
pub fn write_dataset(path: &Path, data: &RddDataset) -> Result<()> {
    let csv_err = |source| CliError::Csv { path: path.to_path_buf(), source };
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    writer.write_record(["y", "x", "z", "cell"]).map_err(csv_err)?;
    for i in 0..data.len() {
        let z = data.z()[i] + data.cutoff();
        writer
            .write_record([
                data.y()[i].to_string(),
                data.x()[i].to_string(),
                z.to_string(),
                data.cell_label(i).to_string(),
            ])
            .map_err(csv_err)?;
    }
    writer.flush().map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}
