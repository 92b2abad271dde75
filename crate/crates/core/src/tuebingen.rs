//! Loader for the Tuebingen cause-effect pairs layout.
//!
//! The directory holds `pairmeta.txt` and one `pairNNNN.txt` per pair. Each
//! metadata row has six whitespace-separated fields:
//!
//! ```text
//! id  cause_first_col  cause_last_col  effect_first_col  effect_last_col  weight
//! 0001 1 1 2 2 1
//! ```
//!
//! Columns are 1-based. Pairs whose cause or effect spans more than one
//! column are skipped. The dataset is presented with the lower-numbered
//! column as `x`, so the label is `x_to_y` when that column is the cause.

use std::path::Path;

use rand::seq::index;

use crate::data::{standardize, Direction, PairDataset};
use crate::error::{Error, Result};
use crate::io;
use crate::rng;

pub const META_FILE: &str = "pairmeta.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct TuebingenPair {
    pub id: u32,
    pub data: PairDataset,
    pub weight: f64,
    pub ground_truth: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaRow {
    pub id: u32,
    pub cause: (usize, usize),
    pub effect: (usize, usize),
    pub weight: f64,
}

impl MetaRow {
    pub fn is_univariate(&self) -> bool {
        self.cause.0 == self.cause.1 && self.effect.0 == self.effect.1
    }
}

pub fn parse_meta(text: &str, file: &str) -> Result<Vec<MetaRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { file: file.to_string(), line: i + 1, msg };
        if fields.len() != 6 {
            return Err(err(format!("expected 6 fields, found {}", fields.len())));
        }
        let int = |k: usize| fields[k].parse::<usize>().map_err(|_| err(format!("field {} is not an integer: {:?}", k + 1, fields[k])));
        let weight: f64 = fields[5].parse().map_err(|_| err(format!("weight is not a number: {:?}", fields[5])))?;
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(err(format!("weight must be positive, got {weight}")));
        }
        let row = MetaRow { id: int(0)? as u32, cause: (int(1)?, int(2)?), effect: (int(3)?, int(4)?), weight };
        if row.cause.0 == 0 || row.effect.0 == 0 || row.cause.0 > row.cause.1 || row.effect.0 > row.effect.1 {
            return Err(err("column ranges must be 1-based and ordered".into()));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Seeded uniform subsample of at most `budget` points, in original order.
pub fn subsample(d: &PairDataset, budget: usize, seed: u64) -> PairDataset {
    if d.len() <= budget {
        return d.clone();
    }
    let mut idx = index::sample(&mut rng::rng(rng::derive(seed, &[rng::STREAM_SUBSAMPLE])), d.len(), budget).into_vec();
    idx.sort_unstable();
    d.select(&idx)
}

/// Loads every univariate pair, subsampled to `budget` points and standardized.
pub fn load_tuebingen(dir: impl AsRef<Path>, budget: usize, seed: u64) -> Result<Vec<TuebingenPair>> {
    let dir = dir.as_ref();
    let meta_path = dir.join(META_FILE);
    let text = std::fs::read_to_string(&meta_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", meta_path.display())))?;
    let rows = parse_meta(&text, &meta_path.display().to_string())?;
    let mut out = Vec::new();
    for row in rows {
        if !row.is_univariate() {
            log::info!("skipping pair {:04}: multivariate cause or effect", row.id);
            continue;
        }
        let path = dir.join(format!("pair{:04}.txt", row.id));
        let cols = io::read_columns(&path)?;
        let width = cols.first().map_or(0, Vec::len);
        let (c, e) = (row.cause.0, row.effect.0);
        if c.max(e) > width {
            return Err(Error::Parse {
                file: path.display().to_string(),
                line: 1,
                msg: format!("metadata references column {} but the file has {width}", c.max(e)),
            });
        }
        let (first, second, label) = if c < e { (c, e, Direction::XToY) } else { (e, c, Direction::YToX) };
        let x = cols.iter().map(|r| r[first - 1]).collect();
        let y = cols.iter().map(|r| r[second - 1]).collect();
        let raw = PairDataset::new(format!("pair{:04}", row.id), x, y, label)?.with_weight(row.weight);
        let sub = subsample(&raw, budget, rng::derive(seed, &[row.id as u64]));
        match standardize(&sub) {
            Ok(data) => out.push(TuebingenPair { id: row.id, data, weight: row.weight, ground_truth: label }),
            Err(e @ Error::Degenerate { .. }) => log::warn!("skipping pair {:04}: {e}", row.id),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meta_parse_and_errors() {
        let rows = parse_meta("0001 1 1 2 2 1\n0002 2 2 1 1 0.5\n0003 1 2 3 3 1\n", "m").unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows[0].is_univariate() && !rows[2].is_univariate());
        assert!(matches!(parse_meta("0001 1 1 2 2\n", "m"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_meta("\n0001 1 1 2 2 -1\n", "m"), Err(Error::Parse { line: 2, .. })));
    }
}
