//! Flat `key = value` benchmark configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Lists are
//! comma-separated. Unknown keys are errors.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `output_dir` | `bench_out` | where reports, logs and models go |
//! | `source` | `synthetic` | `synthetic`, `directory` or `tuebingen` |
//! | `family` | `multi` | synthetic family: `net`, `gauss`, `multi` |
//! | `n_points` | `100` | points per synthetic pair; Tuebingen subsample budget |
//! | `n_train`, `n_test` | `60`, `60` | synthetic database sizes |
//! | `data_seed` | `0` | synthetic data seed |
//! | `train_dir`, `test_dir` | | saved databases for `source = directory` |
//! | `tuebingen_dir` | | Tuebingen layout for `source = tuebingen` |
//! | `cv_folds` | `5` | folds for Tuebingen cross-validation |
//! | `methods` | `meta` | any of `meta`, `meta_nofilm`, `naive_joint`, `reci`, `igci`, `cds`, `cgnn` |
//! | `repetition_seeds` | `1,2,3` | one full run per seed |
//! | `epochs`, `batch_datasets`, `lr`, `ensemble_size` | `500`, `10`, `0.01`, `4` | training |
//! | `encoder_kind` | `deep_sets` | `deep_sets` or `cme` |
//! | `decoder_hidden` | `auto` | `auto` or a fixed width |
//! | `width_candidates`, `validation_fraction` | `5,40`, `0.2` | width selection |
//! | `bandwidths` | `0.005,0.05,0.25,0.5,1,5,50` | kernel bandwidth set |
//! | `estimator` | `quadratic` | training MMD: `quadratic` or `linear` |
//! | `checkpoint_every` | `0` | epochs between checkpoints (0 disables) |
//! | `reuse_models` | `false` | load saved ensembles instead of training |
//! | `reci_degree`, `cds_bins` | `3`, `10` | baseline parameters |
//! | `cgnn_ensemble`, `cgnn_epochs`, `cgnn_hidden` | `4`, `500`, `40` | per-dataset CGNN |
//! | `plots` | `true` | write SVG charts |

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineConfig, Method};
use crate::datagen::Family;
use crate::error::{Error, Result};
use crate::generator::EncoderKind;
use crate::kernels::{BandwidthSet, MmdEstimator};
use crate::trainer::{DecoderWidth, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Directory,
    Tuebingen,
}

/// A method evaluated by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMethod {
    Meta,
    Baseline(Method),
}

impl BenchMethod {
    pub fn name(self) -> &'static str {
        match self {
            BenchMethod::Meta => "meta",
            BenchMethod::Baseline(m) => m.as_str(),
        }
    }
}

impl std::str::FromStr for BenchMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "meta" {
            Ok(BenchMethod::Meta)
        } else {
            s.parse().map(BenchMethod::Baseline)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub output_dir: PathBuf,
    pub source: DataSource,
    pub family: Family,
    pub n_points: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub data_seed: u64,
    pub train_dir: Option<PathBuf>,
    pub test_dir: Option<PathBuf>,
    pub tuebingen_dir: Option<PathBuf>,
    pub cv_folds: usize,
    pub methods: Vec<BenchMethod>,
    pub repetition_seeds: Vec<u64>,
    pub train: TrainConfig,
    pub baseline: BaselineConfig,
    pub reuse_models: bool,
    pub plots: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("bench_out"),
            source: DataSource::Synthetic,
            family: Family::Multi,
            n_points: 100,
            n_train: 60,
            n_test: 60,
            data_seed: 0,
            train_dir: None,
            test_dir: None,
            tuebingen_dir: None,
            cv_folds: 5,
            methods: vec![BenchMethod::Meta],
            repetition_seeds: vec![1, 2, 3],
            train: TrainConfig::default(),
            baseline: BaselineConfig::default(),
            reuse_models: false,
            plots: true,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse_num(key, s)).collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

impl BenchConfig {
    /// Sets one key; used by the file parser and by command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "output_dir" => self.output_dir = PathBuf::from(v),
            "source" => {
                self.source = match v {
                    "synthetic" => DataSource::Synthetic,
                    "directory" => DataSource::Directory,
                    "tuebingen" => DataSource::Tuebingen,
                    _ => return Err(Error::Config(format!("source: unknown value {v:?}"))),
                }
            }
            "family" => self.family = v.parse()?,
            "n_points" => self.n_points = parse_num(key, v)?,
            "n_train" => self.n_train = parse_num(key, v)?,
            "n_test" => self.n_test = parse_num(key, v)?,
            "data_seed" => self.data_seed = parse_num(key, v)?,
            "train_dir" => self.train_dir = Some(PathBuf::from(v)),
            "test_dir" => self.test_dir = Some(PathBuf::from(v)),
            "tuebingen_dir" => self.tuebingen_dir = Some(PathBuf::from(v)),
            "cv_folds" => self.cv_folds = parse_num(key, v)?,
            "methods" | "method" => {
                self.methods = v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect::<Result<_>>()?
            }
            "repetition_seeds" => self.repetition_seeds = parse_list(key, v)?,
            "epochs" => self.train.epochs = parse_num(key, v)?,
            "batch_datasets" => self.train.batch_datasets = parse_num(key, v)?,
            "lr" => self.train.lr = parse_num(key, v)?,
            "ensemble_size" => self.train.ensemble_size = parse_num(key, v)?,
            "encoder_kind" => {
                self.train.encoder_kind = match v {
                    "deep_sets" | "deepsets" => EncoderKind::DeepSets,
                    "cme" => EncoderKind::Cme,
                    _ => return Err(Error::Config(format!("encoder_kind: unknown value {v:?}"))),
                }
            }
            "decoder_hidden" => self.train.decoder_hidden = v.parse::<DecoderWidth>()?,
            "width_candidates" => self.train.width_candidates = parse_list(key, v)?,
            "validation_fraction" => self.train.validation_fraction = parse_num(key, v)?,
            "bandwidths" => {
                let etas = parse_list(key, v)?;
                self.train.bandwidths = BandwidthSet::new(etas)?;
                self.baseline.bandwidths = self.train.bandwidths.clone();
            }
            "estimator" => {
                self.train.estimator = match v {
                    "quadratic" => MmdEstimator::Quadratic,
                    "linear" => MmdEstimator::Linear,
                    _ => return Err(Error::Config(format!("estimator: unknown value {v:?}"))),
                }
            }
            "checkpoint_every" => self.train.checkpoint_every = parse_num(key, v)?,
            "reuse_models" => self.reuse_models = parse_bool(key, v)?,
            "reci_degree" => self.baseline.reci_degree = parse_num(key, v)?,
            "cds_bins" => self.baseline.cds_bins = parse_num(key, v)?,
            "cgnn_ensemble" => self.baseline.cgnn_ensemble = parse_num(key, v)?,
            "cgnn_epochs" => self.baseline.cgnn_epochs = parse_num(key, v)?,
            "cgnn_hidden" => self.baseline.cgnn_hidden = parse_num(key, v)?,
            "plots" => self.plots = parse_bool(key, v)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            c.set(k, v).map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Resolves relative data paths against `root`.
    pub fn resolve_data_root(&mut self, root: &Path) {
        for p in [&mut self.train_dir, &mut self.test_dir, &mut self.tuebingen_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = root.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if self.repetition_seeds.is_empty() {
            return Err(Error::Config("no repetition seeds".into()));
        }
        if self.n_points < 2 {
            return Err(Error::Config("n_points must be at least 2".into()));
        }
        match self.source {
            DataSource::Synthetic if self.n_train == 0 || self.n_test == 0 => {
                return Err(Error::Config("n_train and n_test must be positive".into()))
            }
            DataSource::Directory if self.train_dir.is_none() || self.test_dir.is_none() => {
                return Err(Error::Config("source = directory needs train_dir and test_dir".into()))
            }
            DataSource::Tuebingen if self.tuebingen_dir.is_none() => {
                return Err(Error::Config("source = tuebingen needs tuebingen_dir".into()))
            }
            DataSource::Tuebingen if self.cv_folds < 2 => return Err(Error::Config("cv_folds must be at least 2".into())),
            _ => {}
        }
        let checkpoint_dir = (self.train.checkpoint_every > 0).then(|| self.output_dir.join("checkpoints"));
        TrainConfig { checkpoint_dir, ..self.train.clone() }.validate()?;
        for m in &self.methods {
            if let BenchMethod::Baseline(method) = m {
                BaselineConfig { method: *method, ..self.baseline.clone() }.validate()?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_config() {
        let c = BenchConfig::parse(
            "# comment\nfamily = net\nmethods = meta, reci, cgnn\nepochs=5\nrepetition_seeds = 7\ndecoder_hidden = 5\n",
        )
        .unwrap();
        assert_eq!(c.family, Family::Net);
        assert_eq!(c.methods, vec![BenchMethod::Meta, BenchMethod::Baseline(Method::Reci), BenchMethod::Baseline(Method::Cgnn)]);
        assert_eq!(c.train.epochs, 5);
        assert_eq!(c.repetition_seeds, vec![7]);
        assert_eq!(c.train.decoder_hidden, DecoderWidth::Fixed(5));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(BenchConfig::parse("nonsense = 1\n").is_err());
        assert!(BenchConfig::parse("epochs\n").is_err());
        assert!(BenchConfig::parse("lr = -1\n").is_err());
        assert!(BenchConfig::parse("source = tuebingen\n").is_err());
    }
}
