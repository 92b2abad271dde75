//! End-to-end benchmark protocol.
//!
//! For every repetition seed: build or load the train and test data, train
//! each meta-model (or score each baseline), score the test datasets in their
//! presented orientation and record one line per dataset. A stage failure is
//! recorded in the report and the remaining methods still run.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::baselines::{score_baseline, BaselineConfig, Method};
use crate::config::{BenchConfig, BenchMethod, DataSource};
use crate::data::{Direction, PairDataset};
use crate::datagen::{self, CeDatabase, CeEntry};
use crate::error::{Error, Result};
use crate::generator::Variant;
use crate::metrics::kfold_cv;
use crate::report::{BenchmarkReport, DatasetRecord, FailureRecord, TrainingSummary};
use crate::rng;
use crate::trainer::{ensemble_score, eval_seed, train_ensemble, TrainConfig, TrainedEnsemble};
use crate::tuebingen::load_tuebingen;

pub const PROGRESS_LOG: &str = "progress.jsonl";

/// One train/test split to evaluate.
struct Split {
    fold: usize,
    train: CeDatabase,
    test: Vec<PairDataset>,
}

fn meta_variant(m: BenchMethod) -> Option<Variant> {
    match m {
        BenchMethod::Meta => Some(Variant::Full),
        BenchMethod::Baseline(Method::MetaNofilm) => Some(Variant::NoFilm),
        BenchMethod::Baseline(Method::NaiveJoint) => Some(Variant::NaiveJoint),
        _ => None,
    }
}

/// Seed shared by every meta variant for one repetition and fold.
pub fn meta_seed(repetition: u64, fold: usize) -> u64 {
    rng::derive(repetition, &[0x6d65_7461, fold as u64])
}

fn database_from_pairs(pairs: &[PairDataset]) -> CeDatabase {
    CeDatabase {
        family: "external".into(),
        master_seed: 0,
        entries: pairs
            .iter()
            .map(|p| {
                let flipped = p.label == Direction::YToX;
                let causal = if flipped { p.swapped() } else { p.clone() };
                CeEntry { spec: None, causal, flipped, diagnostics: Default::default() }
            })
            .collect(),
    }
}

fn splits_for(config: &BenchConfig, repetition: u64, tuebingen: Option<&[PairDataset]>) -> Result<Vec<Split>> {
    match config.source {
        DataSource::Synthetic => {
            let seed = rng::derive(config.data_seed, &[repetition]);
            let train = datagen::generate(config.family, config.n_train, config.n_points, rng::derive(seed, &[0]))?;
            let test = datagen::generate(config.family, config.n_test, config.n_points, rng::derive(seed, &[1]))?;
            Ok(vec![Split { fold: 0, train, test: test.presented() }])
        }
        DataSource::Directory => {
            let train = CeDatabase::load(config.train_dir.as_ref().expect("validated"))?;
            let test = CeDatabase::load(config.test_dir.as_ref().expect("validated"))?;
            Ok(vec![Split { fold: 0, train, test: test.presented() }])
        }
        DataSource::Tuebingen => {
            let pairs = tuebingen.expect("loaded before splitting");
            kfold_cv(pairs.len(), config.cv_folds, repetition)?
                .into_iter()
                .enumerate()
                .map(|(fold, (tr, te))| {
                    let train: Vec<PairDataset> = tr.iter().map(|&i| pairs[i].clone()).collect();
                    Ok(Split { fold, train: database_from_pairs(&train), test: te.iter().map(|&i| pairs[i].clone()).collect() })
                })
                .collect()
        }
    }
}

fn train_config_for(config: &BenchConfig, variant: Variant, master_seed: u64) -> TrainConfig {
    let out = &config.output_dir;
    TrainConfig {
        variant,
        master_seed,
        progress_log: Some(out.join(PROGRESS_LOG)),
        checkpoint_dir: (config.train.checkpoint_every > 0).then(|| out.join("checkpoints")),
        ..config.train.clone()
    }
}

fn model_dir(config: &BenchConfig, method: BenchMethod, repetition: u64, fold: usize) -> PathBuf {
    config.output_dir.join("models").join(method.name()).join(format!("rep{repetition}_fold{fold}"))
}

fn obtain_ensemble(config: &BenchConfig, method: BenchMethod, variant: Variant, repetition: u64, split: &Split) -> Result<TrainedEnsemble> {
    let dir = model_dir(config, method, repetition, split.fold);
    if config.reuse_models && dir.join("member_000.ckpt").exists() {
        log::info!("loading {} models from {}", method.name(), dir.display());
        return TrainedEnsemble::load(&dir);
    }
    let ens = train_ensemble(&split.train, &train_config_for(config, variant, meta_seed(repetition, split.fold)))?;
    ens.save(&dir)?;
    Ok(ens)
}

fn score_meta(config: &BenchConfig, ens: &TrainedEnsemble, method: BenchMethod, repetition: u64, split: &Split) -> Result<Vec<DatasetRecord>> {
    let master = meta_seed(repetition, split.fold);
    split
        .test
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            let t0 = Instant::now();
            let score = ensemble_score(&ens.models, d, eval_seed(master, i), &config.train.bandwidths)?;
            Ok(DatasetRecord::new(method.name(), repetition, &d.name, d.label, d.weight, score, t0.elapsed().as_secs_f64()))
        })
        .collect()
}

fn score_per_dataset(config: &BenchConfig, method: Method, repetition: u64, test: &[PairDataset]) -> Result<Vec<DatasetRecord>> {
    let bc = BaselineConfig { method, ..config.baseline.clone() };
    test.par_iter()
        .enumerate()
        .map(|(i, d)| {
            let t0 = Instant::now();
            let score = score_baseline(d, &bc, rng::derive(repetition, &[0x6261_7365, i as u64]))?;
            Ok(DatasetRecord::new(method.as_str(), repetition, &d.name, d.label, d.weight, score, t0.elapsed().as_secs_f64()))
        })
        .collect()
}

/// Runs the full protocol and writes the report into `config.output_dir`.
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchmarkReport> {
    config.validate()?;
    std::fs::create_dir_all(&config.output_dir)?;
    let progress = config.output_dir.join(PROGRESS_LOG);
    if progress.exists() {
        std::fs::remove_file(&progress)?;
    }
    let tuebingen: Option<Vec<PairDataset>> = match config.source {
        DataSource::Tuebingen => {
            let dir = config.tuebingen_dir.as_ref().expect("validated");
            let pairs = load_tuebingen(dir, config.n_points, config.data_seed)?;
            if pairs.len() < config.cv_folds {
                return Err(Error::Config(format!("{} usable pairs for {} folds", pairs.len(), config.cv_folds)));
            }
            Some(pairs.into_iter().map(|p| p.data).collect())
        }
        _ => None,
    };
    let mut records = Vec::new();
    let mut training = Vec::new();
    let mut failures = Vec::new();
    for &rep in &config.repetition_seeds {
        let splits = match splits_for(config, rep, tuebingen.as_deref()) {
            Ok(s) => s,
            Err(e) => {
                log::error!("repetition {rep}: data stage failed: {e}");
                failures.push(FailureRecord { method: "*".into(), repetition: rep, stage: "data".into(), message: e.to_string() });
                continue;
            }
        };
        for &method in &config.methods {
            log::info!("repetition {rep}: {}", method.name());
            let result = match (meta_variant(method), method) {
                (Some(variant), _) => splits.iter().try_fold(Vec::new(), |mut acc, split| {
                    let ens = obtain_ensemble(config, method, variant, rep, split)?;
                    for (k, m) in ens.models.iter().enumerate() {
                        let initial = ens.initial_losses.get(k).copied().unwrap_or(f64::NAN);
                        let final_loss = ens.histories.get(k).and_then(|h| h.last()).map_or(initial, |r| r.mean_loss);
                        training.push(TrainingSummary {
                            method: method.name().into(),
                            repetition: rep,
                            fold: split.fold,
                            member: k,
                            decoder_hidden: m.config.decoder_hidden,
                            initial_loss: initial,
                            final_loss,
                        });
                    }
                    acc.extend(score_meta(config, &ens, method, rep, split)?);
                    Ok(acc)
                }),
                (None, BenchMethod::Baseline(m)) => {
                    // Per-dataset methods need no training split; score each dataset once.
                    let test: Vec<PairDataset> = splits.iter().flat_map(|s| s.test.iter().cloned()).collect();
                    score_per_dataset(config, m, rep, &test)
                }
                (None, BenchMethod::Meta) => unreachable!("meta always has a variant"),
            };
            match result {
                Ok(r) => records.extend(r),
                Err(e) => {
                    log::error!("repetition {rep}: {} failed: {e}", method.name());
                    failures.push(FailureRecord {
                        method: method.name().into(),
                        repetition: rep,
                        stage: "evaluate".into(),
                        message: e.to_string(),
                    });
                }
            }
        }
    }
    let report = BenchmarkReport::from_records(
        serde_json::to_value(config)?,
        config.repetition_seeds.clone(),
        records,
        training,
        failures,
    )?;
    report.save(&config.output_dir)?;
    if config.plots {
        report.write_plots(&config.output_dir)?;
    }
    Ok(report)
}

pub fn run_benchmark_file(path: impl AsRef<Path>) -> Result<BenchmarkReport> {
    run_benchmark(&BenchConfig::from_file(path)?)
}
