//! Bivariate sample sets and the standardization convention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Causal direction label of a pair, relative to its presented column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    XToY,
    YToX,
    Unknown,
}

impl Direction {
    pub fn reversed(self) -> Self {
        match self {
            Direction::XToY => Direction::YToX,
            Direction::YToX => Direction::XToY,
            Direction::Unknown => Direction::Unknown,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::XToY => "x_to_y",
            Direction::YToX => "y_to_x",
            Direction::Unknown => "unknown",
        }
    }
}

/// One observed sample `{(x_j, y_j)}` of a cause-effect pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDataset {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub label: Direction,
    pub weight: f64,
}

impl PairDataset {
    /// Builds a dataset, checking equal lengths, `m >= 2` and finiteness.
    pub fn new(name: impl Into<String>, x: Vec<f64>, y: Vec<f64>, label: Direction) -> Result<Self> {
        let name = name.into();
        if x.len() != y.len() {
            return Err(Error::Shape(format!(
                "{name}: x has {} points, y has {}",
                x.len(),
                y.len()
            )));
        }
        if x.len() < 2 {
            return Err(Error::Precondition(format!("{name}: need at least 2 points")));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("{name}: non-finite value")));
        }
        Ok(Self { name, x, y, label, weight: 1.0 })
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// The coordinate-swapped dataset `{(y_j, x_j)}` with the label reversed.
    pub fn swapped(&self) -> Self {
        Self {
            name: self.name.clone(),
            x: self.y.clone(),
            y: self.x.clone(),
            label: self.label.reversed(),
            weight: self.weight,
        }
    }

    /// Points as a row-major `m x 2` buffer.
    pub fn joint(&self) -> Vec<f64> {
        self.x.iter().zip(&self.y).flat_map(|(&a, &b)| [a, b]).collect()
    }

    /// Reorders the points by `perm` (used by permutation tests and subsampling).
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            x: idx.iter().map(|&i| self.x[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            label: self.label,
            weight: self.weight,
        }
    }
}

pub(crate) fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn zscore(v: &[f64], name: &str, which: &str) -> Result<Vec<f64>> {
    let (mean, std) = mean_std(v);
    let scale = mean.abs().max(1.0);
    if !(std > 1e-12 * scale) {
        return Err(Error::Degenerate {
            name: name.to_string(),
            reason: format!("variable {which} has zero variance"),
        });
    }
    Ok(v.iter().map(|a| (a - mean) / std).collect())
}

/// Shifts and scales each variable to mean 0 and population variance 1.
///
/// A second pass corrects the residual rounding error so that repeated
/// application is a fixed point to ~1e-15.
pub fn standardize(d: &PairDataset) -> Result<PairDataset> {
    if d.len() < 2 {
        return Err(Error::Precondition(format!("{}: need at least 2 points", d.name)));
    }
    let x = zscore(&zscore(&d.x, &d.name, "x")?, &d.name, "x")?;
    let y = zscore(&zscore(&d.y, &d.name, "y")?, &d.name, "y")?;
    Ok(PairDataset { x, y, ..d.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(x: Vec<f64>, y: Vec<f64>) -> PairDataset {
        PairDataset::new("t", x, y, Direction::Unknown).unwrap()
    }

    #[test]
    fn two_point_zscore_is_exact() {
        let s = standardize(&ds(vec![0.0, 2.0], vec![1.0, 5.0])).unwrap();
        assert_eq!(s.x, vec![-1.0, 1.0]);
        assert_eq!(s.y, vec![-1.0, 1.0]);
    }

    #[test]
    fn standardize_is_idempotent() {
        let d = ds(vec![0.3, 1.7, -2.2, 5.0, 0.1], vec![3.0, -1.0, 2.5, 0.0, 9.0]);
        let once = standardize(&d).unwrap();
        let twice = standardize(&once).unwrap();
        for (a, b) in once.x.iter().chain(&once.y).zip(twice.x.iter().chain(&twice.y)) {
            assert!((a - b).abs() < 1e-12);
        }
        let (m, s) = mean_std(&once.y);
        assert!(m.abs() < 1e-12 && (s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_variable_is_rejected() {
        let err = standardize(&ds(vec![0.0, 1.0, 2.0], vec![3.0, 3.0, 3.0])).unwrap_err();
        assert!(matches!(err, Error::Degenerate { .. }));
    }

    #[test]
    fn construction_checks() {
        assert!(PairDataset::new("a", vec![1.0], vec![1.0], Direction::Unknown).is_err());
        assert!(PairDataset::new("a", vec![1.0, 2.0], vec![1.0], Direction::Unknown).is_err());
        assert!(PairDataset::new("a", vec![1.0, f64::NAN], vec![1.0, 2.0], Direction::Unknown).is_err());
    }

    #[test]
    fn swap_reverses_label() {
        let d = PairDataset::new("a", vec![1.0, 2.0], vec![3.0, 4.0], Direction::XToY).unwrap();
        let s = d.swapped();
        assert_eq!(s.x, d.y);
        assert_eq!(s.label, Direction::YToX);
        assert_eq!(s.swapped(), d);
    }
}
