//! Evaluation metrics and cross-validation splits.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

/// Area under the precision-recall curve, stepwise over descending scores.
///
/// Instances with equal scores enter the sweep together. Each threshold adds
/// `(R_n - R_{n-1}) * P_n`, so the curve is never interpolated linearly.
pub fn auprc(scores: &[(f64, bool)]) -> Result<f64> {
    let positives = scores.iter().filter(|s| s.1).count();
    if positives == 0 || positives == scores.len() {
        return Err(Error::UndefinedMetric("AUPRC needs both positive and negative instances".into()));
    }
    if scores.iter().any(|s| s.0.is_nan()) {
        return Err(Error::UndefinedMetric("NaN score".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut tp, mut seen, mut area, mut prev_recall) = (0usize, 0usize, 0.0, 0.0);
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == s {
            tp += sorted[i].1 as usize;
            seen += 1;
            i += 1;
        }
        let recall = tp as f64 / positives as f64;
        area += (recall - prev_recall) * (tp as f64 / seen as f64);
        prev_recall = recall;
    }
    Ok(area)
}

/// Fraction of `true` entries.
pub fn accuracy(correct: &[bool]) -> Result<f64> {
    if correct.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty set".into()));
    }
    Ok(correct.iter().filter(|&&c| c).count() as f64 / correct.len() as f64)
}

/// `sum w_i correct_i / sum w_i`.
pub fn weighted_accuracy(correct: &[bool], weights: &[f64]) -> Result<f64> {
    if correct.len() != weights.len() {
        return Err(Error::Shape(format!("{} records, {} weights", correct.len(), weights.len())));
    }
    if correct.is_empty() {
        return Err(Error::UndefinedMetric("weighted accuracy of an empty set".into()));
    }
    if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::Precondition("weights must be positive".into()));
    }
    let total: f64 = weights.iter().sum();
    Ok(correct.iter().zip(weights).filter(|(c, _)| **c).map(|(_, w)| w).sum::<f64>() / total)
}

/// Seeded shuffle followed by `k` contiguous folds of near-equal size.
pub fn kfold_cv(n: usize, k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {k}")));
    }
    if k > n {
        return Err(Error::Config(format!("k = {k} exceeds the {n} datasets")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::rng(rng::derive(seed, &[rng::STREAM_SHUFFLE])));
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = n / k + usize::from(f < n % k);
        let test = idx[start..start + size].to_vec();
        let train = idx[..start].iter().chain(&idx[start + size..]).copied().collect();
        folds.push((train, test));
        start += size;
    }
    Ok(folds)
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    crate::data::mean_std(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auprc_examples() {
        assert_eq!(auprc(&[(0.9, true), (0.8, true), (0.1, false)]).unwrap(), 1.0);
        let v = auprc(&[(0.9, true), (0.8, false), (0.7, true), (0.6, false)]).unwrap();
        assert!((v - 5.0 / 6.0).abs() < 1e-15);
        let v = auprc(&[(0.5, true), (0.5, false), (0.5, false)]).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(auprc(&[(1.0, true)]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn weighted_accuracy_examples() {
        assert_eq!(weighted_accuracy(&[true, true], &[1.0, 3.0]).unwrap(), 1.0);
        assert!((weighted_accuracy(&[true, false], &[2.0, 1.0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let c = [true, false, true, true];
        assert_eq!(weighted_accuracy(&c, &[1.0; 4]).unwrap(), accuracy(&c).unwrap());
    }

    #[test]
    fn kfold_partition() {
        let folds = kfold_cv(10, 5, 3).unwrap();
        assert_eq!(folds.len(), 5);
        let mut all: Vec<usize> = folds.iter().flat_map(|f| f.1.clone()).collect();
        assert!(folds.iter().all(|f| f.1.len() == 2 && f.0.len() == 8));
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(folds, kfold_cv(10, 5, 3).unwrap());
        assert!(kfold_cv(3, 5, 0).is_err());
    }
}
