//! Reference cause-effect methods: RECI, IGCI, CDS and per-dataset CGNN.
//!
//! These are compact reimplementations of each method's statistic, not
//! wrappers around an external toolbox, so exact numeric parity with other
//! implementations is not expected.
//!
//! Every score follows the [`DirectionScore`] convention: `s > 0` favours
//! `x -> y`, and scoring the swapped dataset negates `s` exactly.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{mean_std, PairDataset};
use crate::datagen::{CeDatabase, CeEntry};
use crate::error::{Error, Result};
use crate::generator::Variant;
use crate::kernels::{BandwidthSet, MmdEstimator};
use crate::rng;
use crate::trainer::{self, fit_mmd, DecoderWidth, DirectionScore, TrainConfig, TrainedEnsemble};

/// Scores with `|s|` at or below this are reported as ties.
pub const TIE_TOLERANCE: f64 = 1e-10;

fn snapped(m_xy: f64, m_yx: f64, s: f64) -> DirectionScore {
    DirectionScore::from_score(m_xy, m_yx, if s.abs() <= TIE_TOLERANCE { 0.0 } else { s })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Reci,
    Igci,
    Cds,
    Cgnn,
    MetaNofilm,
    NaiveJoint,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Reci => "reci",
            Method::Igci => "igci",
            Method::Cds => "cds",
            Method::Cgnn => "cgnn",
            Method::MetaNofilm => "meta_nofilm",
            Method::NaiveJoint => "naive_joint",
        }
    }

    /// Whether the method scores each dataset on its own.
    pub fn is_per_dataset(self) -> bool {
        matches!(self, Method::Reci | Method::Igci | Method::Cds | Method::Cgnn)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "reci" => Method::Reci,
            "igci" => Method::Igci,
            "cds" => Method::Cds,
            "cgnn" => Method::Cgnn,
            "meta_nofilm" | "no_film" => Method::MetaNofilm,
            "naive_joint" => Method::NaiveJoint,
            _ => return Err(Error::Config(format!("unknown baseline method {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub method: Method,
    pub reci_degree: usize,
    pub cds_bins: usize,
    pub cgnn_ensemble: usize,
    pub cgnn_epochs: usize,
    pub cgnn_hidden: usize,
    pub cgnn_lr: f64,
    pub cgnn_estimator: MmdEstimator,
    pub bandwidths: BandwidthSet,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            method: Method::Reci,
            reci_degree: 3,
            cds_bins: 10,
            cgnn_ensemble: 4,
            cgnn_epochs: 500,
            cgnn_hidden: 40,
            cgnn_lr: 0.01,
            cgnn_estimator: MmdEstimator::Quadratic,
            bandwidths: BandwidthSet::default(),
            seed: 0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        match self.method {
            Method::Reci if self.reci_degree == 0 => Err(Error::Config("reci_degree must be at least 1".into())),
            Method::Cds if self.cds_bins < 2 => Err(Error::Config("cds_bins must be at least 2".into())),
            Method::Cgnn if self.cgnn_ensemble == 0 || self.cgnn_hidden == 0 => {
                Err(Error::Config("cgnn_ensemble and cgnn_hidden must be positive".into()))
            }
            Method::Cgnn if !(self.cgnn_lr > 0.0) => Err(Error::Config("cgnn_lr must be positive".into())),
            _ => Ok(()),
        }
    }
}

/// Scores one dataset with a per-dataset method.
pub fn score_baseline(d: &PairDataset, config: &BaselineConfig, seed: u64) -> Result<DirectionScore> {
    config.validate()?;
    match config.method {
        Method::Reci => reci_score(d, config.reci_degree),
        Method::Igci => igci_score(d),
        Method::Cds => cds_score(d, config.cds_bins),
        Method::Cgnn => cgnn_score(d, config, seed),
        m => Err(Error::Config(format!("{} needs a training database; use the benchmark runner", m.as_str()))),
    }
}

fn rescale_unit(v: &[f64]) -> Vec<f64> {
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let span = hi - lo;
    if span > 0.0 {
        v.iter().map(|x| (x - lo) / span).collect()
    } else {
        vec![0.0; v.len()]
    }
}

/// Mean squared residual of a least-squares polynomial fit of `t` on `u`.
///
/// The degree drops until the design has full column rank.
fn poly_mse(u: &[f64], t: &[f64], degree: usize) -> f64 {
    let m = u.len();
    let b = DVector::from_column_slice(t);
    let mut deg = degree.min(m.saturating_sub(1)).max(1);
    loop {
        let a = DMatrix::from_fn(m, deg + 1, |i, j| u[i].powi(j as i32));
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let rank = svd.rank(smax * 1e-10);
        if rank == deg + 1 || deg == 0 {
            let coef = svd.solve(&b, smax * 1e-12).expect("thin SVD has both factors");
            return (a * coef - &b).norm_squared() / m as f64;
        }
        log::warn!("polynomial design of degree {deg} is rank deficient; reducing degree");
        deg -= 1;
    }
}

/// Regression error based causal inference.
///
/// Both variables are rescaled to `[0, 1]`; `s = mse(x | y) - mse(y | x)`.
pub fn reci_score(d: &PairDataset, degree: usize) -> Result<DirectionScore> {
    if degree == 0 {
        return Err(Error::Config("RECI degree must be at least 1".into()));
    }
    if d.len() < 2 {
        return Err(Error::Precondition("RECI needs at least 2 points".into()));
    }
    if mean_std(&d.x).1 == 0.0 || mean_std(&d.y).1 == 0.0 {
        return Ok(snapped(0.0, 0.0, 0.0));
    }
    let x = rescale_unit(&d.x);
    let y = rescale_unit(&d.y);
    let fwd = poly_mse(&x, &y, degree);
    let bwd = poly_mse(&y, &x, degree);
    Ok(snapped(fwd, bwd, bwd - fwd))
}

fn zscore(v: &[f64]) -> Vec<f64> {
    let (m, s) = mean_std(v);
    if s > 0.0 {
        v.iter().map(|x| (x - m) / s).collect()
    } else {
        vec![0.0; v.len()]
    }
}

/// Mean log-slope of `t` against `u` over consecutive points sorted by `u`.
///
/// Gaps where either difference is zero are skipped.
fn log_slope(u: &[f64], t: &[f64]) -> f64 {
    let mut idx: Vec<usize> = (0..u.len()).collect();
    idx.sort_by(|&a, &b| u[a].total_cmp(&u[b]));
    let (mut sum, mut n) = (0.0, 0usize);
    for w in idx.windows(2) {
        let du = u[w[1]] - u[w[0]];
        let dt = t[w[1]] - t[w[0]];
        if du != 0.0 && dt != 0.0 {
            sum += (dt / du).abs().ln();
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Slope-based IGCI with a Gaussian reference measure.
///
/// `C_xy` is the mean log-slope of `y` on `x` after standardizing both
/// variables; `s = C_yx - C_xy`.
pub fn igci_score(d: &PairDataset) -> Result<DirectionScore> {
    if d.len() < 3 {
        return Err(Error::Precondition("IGCI needs at least 3 points".into()));
    }
    let x = zscore(&d.x);
    let y = zscore(&d.y);
    let c_xy = log_slope(&x, &y);
    let c_yx = log_slope(&y, &x);
    Ok(snapped(c_xy, c_yx, c_yx - c_xy))
}

/// Variance across equal-count bins of `u` of the conditional std of `t`.
fn conditional_std_variance(u: &[f64], t: &[f64], bins: usize) -> f64 {
    let m = u.len();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| u[a].total_cmp(&u[b]));
    let bins = bins.min(m);
    let mut groups: Vec<Vec<usize>> = Vec::with_capacity(bins);
    let mut start = 0;
    for b in 0..bins {
        let size = m / bins + usize::from(b < m % bins);
        groups.push(idx[start..start + size].to_vec());
        start += size;
    }
    // Merge bins that are too small to have a spread into their neighbour.
    let mut merged: Vec<Vec<usize>> = Vec::with_capacity(groups.len());
    for g in groups {
        match merged.last_mut() {
            Some(last) if last.len() < 2 || g.len() < 2 => last.extend(g),
            _ => merged.push(g),
        }
    }
    let stds: Vec<f64> = merged.iter().map(|g| mean_std(&g.iter().map(|&i| t[i]).collect::<Vec<_>>()).1).collect();
    let (_, s) = mean_std(&stds);
    s * s
}

/// Conditional distribution variability: lower spread of the conditional
/// standard deviation marks the causal direction. `s = V_yx - V_xy`.
pub fn cds_score(d: &PairDataset, bins: usize) -> Result<DirectionScore> {
    if bins < 2 {
        return Err(Error::Config("CDS needs at least 2 bins".into()));
    }
    if d.len() < 4 {
        return Err(Error::Precondition("CDS needs at least 4 points".into()));
    }
    // Sorting by a constant column would make the bins arbitrary.
    if mean_std(&d.x).1 == 0.0 || mean_std(&d.y).1 == 0.0 {
        return Ok(snapped(0.0, 0.0, 0.0));
    }
    let x = zscore(&d.x);
    let y = zscore(&d.y);
    let v_xy = conditional_std_variance(&x, &y, bins);
    let v_yx = conditional_std_variance(&y, &x, bins);
    Ok(snapped(v_xy, v_yx, v_yx - v_xy))
}

fn single_dataset_db(d: &PairDataset) -> CeDatabase {
    CeDatabase {
        family: "single".into(),
        master_seed: 0,
        entries: vec![CeEntry { spec: None, causal: d.clone(), flipped: false, diagnostics: BTreeMap::new() }],
    }
}

/// Mean fit MMD² of `ensemble` decoders trained on `d` alone.
fn cgnn_fit(d: &PairDataset, config: &BaselineConfig, seed: u64) -> Result<f64> {
    let tc = TrainConfig {
        epochs: config.cgnn_epochs,
        batch_datasets: 1,
        lr: config.cgnn_lr,
        bandwidths: config.bandwidths.clone(),
        ensemble_size: 1,
        variant: Variant::NaiveJoint,
        decoder_hidden: DecoderWidth::Fixed(config.cgnn_hidden),
        master_seed: seed,
        estimator: config.cgnn_estimator,
        ..TrainConfig::default()
    };
    let db = single_dataset_db(d);
    let mut total = 0.0;
    for k in 0..config.cgnn_ensemble {
        let run_seed = rng::derive(seed, &[k as u64]);
        let model = trainer::train(&db, &tc, config.cgnn_hidden, run_seed)?;
        total += fit_mmd(&model, d, rng::derive(run_seed, &[rng::STREAM_EVAL]), &config.bandwidths)?;
    }
    Ok(total / config.cgnn_ensemble as f64)
}

/// Per-dataset CGNN: fresh decoders fitted in each direction.
///
/// Both directions use the same seeds, so scoring the swapped dataset swaps
/// `m_xy` and `m_yx` exactly.
pub fn cgnn_score(d: &PairDataset, config: &BaselineConfig, seed: u64) -> Result<DirectionScore> {
    if config.cgnn_ensemble == 0 {
        return Err(Error::Config("cgnn_ensemble must be positive".into()));
    }
    let m_xy = cgnn_fit(d, config, seed)?;
    let m_yx = cgnn_fit(&d.swapped(), config, seed)?;
    Ok(DirectionScore::from_mmds(m_xy, m_yx))
}

/// Trains the meta-model with FiLM removed (`NoFilm`) or as one shared decoder (`NaiveJoint`).
pub fn ablation_variant(db: &CeDatabase, config: &TrainConfig, variant: Variant) -> Result<TrainedEnsemble> {
    if variant == Variant::Full {
        return Err(Error::Config("ablation variant must be no_film or naive_joint".into()));
    }
    trainer::train_ensemble(db, &TrainConfig { variant, ..config.clone() })
}
