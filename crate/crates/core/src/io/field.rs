//! Element field CSV: `element_id,value,coverage,method`.

use super::{fmt_f64, IoError};
use crate::transfer::{ElementField, FieldUnit, Method};
use std::path::Path;

const HEADER: [&str; 4] = ["element_id", "value", "coverage", "method"];

fn csv_err(path: &Path, e: csv::Error) -> IoError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => IoError::io(path, io),
        kind => IoError::format(path, format!("{kind:?}")),
    }
}

pub fn write_field(path: &Path, field: &ElementField) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(HEADER).map_err(|e| csv_err(path, e))?;
    for (e, (v, c)) in field.values.iter().zip(&field.coverage).enumerate() {
        w.write_record([e.to_string(), fmt_f64(*v), fmt_f64(*c), field.method.label().to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

/// Rows must be in element order starting at 0 and share one method.
pub fn read_field(path: &Path, unit: FieldUnit) -> Result<ElementField, IoError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(IoError::format(path, format!("header must be {}", HEADER.join(","))));
    }
    let mut values = Vec::new();
    let mut coverage = Vec::new();
    let mut method = None;
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = row + 2;
        let bad = |what: &str| IoError::format(path, format!("line {line}: bad {what}"));
        let id: usize = rec[0].trim().parse().map_err(|_| bad("element_id"))?;
        if id != row {
            return Err(IoError::format(path, format!("line {line}: element_id {id}, expected {row}")));
        }
        values.push(rec[1].trim().parse::<f64>().map_err(|_| bad("value"))?);
        coverage.push(rec[2].trim().parse::<f64>().map_err(|_| bad("coverage"))?);
        let m = Method::from_label(rec[3].trim()).ok_or_else(|| bad("method"))?;
        if *method.get_or_insert(m) != m {
            return Err(IoError::format(path, format!("line {line}: mixed methods")));
        }
    }
    if values.is_empty() {
        return Err(IoError::format(path, "no rows"));
    }
    Ok(ElementField { values, coverage, unit, method: method.unwrap_or(Method::Derived) })
}

/// Two-column `statistic,value` table.
pub fn write_key_values(path: &Path, rows: &[(&str, f64)]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["statistic", "value"]).map_err(|e| csv_err(path, e))?;
    for (k, v) in rows {
        w.write_record([k.to_string(), fmt_f64(*v)]).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

pub(crate) fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}
