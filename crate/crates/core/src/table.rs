//! Minimal numeric CSV reader shared by the trace, script and calibration formats.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TableError {
    #[error("line {line}: expected {expected} columns, found {found}")]
    ColumnCount { line: usize, expected: usize, found: usize },
    #[error("line {line}: `{value}` is not a finite number")]
    BadNumber { line: usize, value: String },
}

/// Parses rows of exactly `columns` finite numbers. Blank lines and lines
/// starting with `#` are skipped; a non-numeric first row is taken as a header.
pub fn parse_rows(text: &str, columns: usize) -> Result<Vec<Vec<f64>>, TableError> {
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != columns {
            return Err(TableError::ColumnCount {
                line: idx + 1,
                expected: columns,
                found: cells.len(),
            });
        }
        let parsed: Result<Vec<f64>, _> = cells
            .iter()
            .map(|c| c.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or(*c))
            .collect();
        match parsed {
            Ok(v) => {
                rows.push(v);
            }
            Err(_) if rows.is_empty() && cells.iter().all(|c| c.parse::<f64>().is_err()) => {
                // header row
            }
            Err(bad) => {
                return Err(TableError::BadNumber {
                    line: idx + 1,
                    value: bad.to_string(),
                })
            }
        }
    }
    Ok(rows)
}
