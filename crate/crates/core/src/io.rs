//! Plain-text numeric column files.
//!
//! One row per line, values separated by whitespace, `.` as the decimal
//! separator. Blank lines are skipped.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{Direction, PairDataset};
use crate::error::{Error, Result};

/// Parses whitespace-delimited rows; every row must have the same width.
pub fn parse_columns(text: &str, file: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| Error::Parse {
                    file: file.to_string(),
                    line: i + 1,
                    msg: format!("not a number: {tok:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    file: file.to_string(),
                    line: i + 1,
                    msg: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse { file: file.to_string(), line: i + 1, msg: "non-finite value".into() });
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_columns(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_columns(&text, &path.display().to_string())
}

/// Reads a two-column file as a dataset with unknown direction.
pub fn read_pair_file(path: impl AsRef<Path>) -> Result<PairDataset> {
    let path = path.as_ref();
    let rows = read_columns(path)?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    if rows.first().map(|r| r.len()) != Some(2) {
        return Err(Error::Parse { file: path.display().to_string(), line: 1, msg: "expected exactly two columns".into() });
    }
    let (x, y) = rows.iter().map(|r| (r[0], r[1])).unzip();
    PairDataset::new(name, x, y, Direction::Unknown)
}

/// Writes `x y` rows using the shortest representation that round-trips.
pub fn write_pair_file(path: impl AsRef<Path>, d: &PairDataset) -> Result<()> {
    let mut s = String::with_capacity(d.len() * 40);
    for (a, b) in d.x.iter().zip(&d.y) {
        writeln!(s, "{a:?} {b:?}").expect("write to String");
    }
    std::fs::write(path, s)?;
    Ok(())
}
