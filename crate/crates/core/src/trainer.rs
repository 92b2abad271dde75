//! Joint training over a cause-effect database and direction inference.

use std::io::Write as _;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Direction, PairDataset};
use crate::datagen::CeDatabase;
use crate::embeddings::{CmeConfig, DatasetFeature, DEEPSETS_OUTPUT};
use crate::error::{Error, Result};
use crate::generator::{EncoderKind, GeneratorConfig, GeneratorModel, Variant};
use crate::kernels::{mmd2_unbiased, BandwidthSet, MmdEstimator, MmdTarget};
use crate::nn::AdamState;
use crate::rng;

/// Decoder width: fixed, or chosen among candidates on a validation slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderWidth {
    Auto,
    Fixed(usize),
}

impl std::str::FromStr for DecoderWidth {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(DecoderWidth::Auto);
        }
        match s.parse::<usize>() {
            Ok(h) if h > 0 => Ok(DecoderWidth::Fixed(h)),
            _ => Err(Error::Config(format!("decoder_hidden must be a positive integer or \"auto\", got {s:?}"))),
        }
    }
}

impl std::fmt::Display for DecoderWidth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DecoderWidth::Auto => f.write_str("auto"),
            DecoderWidth::Fixed(h) => write!(f, "{h}"),
        }
    }
}

pub const WIDTH_CANDIDATES: [usize; 2] = [5, 40];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Datasets per mini-batch (`q`).
    pub batch_datasets: usize,
    pub lr: f64,
    pub bandwidths: BandwidthSet,
    pub ensemble_size: usize,
    pub encoder_kind: EncoderKind,
    pub variant: Variant,
    pub decoder_hidden: DecoderWidth,
    pub width_candidates: Vec<usize>,
    /// Fraction of the training database held out for width selection.
    pub validation_fraction: f64,
    pub master_seed: u64,
    pub estimator: MmdEstimator,
    /// Save a checkpoint every this many epochs (0 disables).
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
    /// Append per-epoch JSON lines here.
    pub progress_log: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_datasets: 10,
            lr: 0.01,
            bandwidths: BandwidthSet::default(),
            ensemble_size: 4,
            encoder_kind: EncoderKind::DeepSets,
            variant: Variant::Full,
            decoder_hidden: DecoderWidth::Auto,
            width_candidates: WIDTH_CANDIDATES.to_vec(),
            validation_fraction: 0.2,
            master_seed: 0,
            estimator: MmdEstimator::Quadratic,
            checkpoint_every: 0,
            checkpoint_dir: None,
            progress_log: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_datasets == 0 || self.ensemble_size == 0 {
            return Err(Error::Config("batch_datasets and ensemble_size must be positive".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.decoder_hidden == DecoderWidth::Auto {
            if self.width_candidates.is_empty() || self.width_candidates.contains(&0) {
                return Err(Error::Config("width candidates must be positive".into()));
            }
            if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
                return Err(Error::Config("validation_fraction must lie in (0, 1)".into()));
            }
        }
        if self.checkpoint_every > 0 && self.checkpoint_dir.is_none() {
            return Err(Error::Config("checkpoint_every needs checkpoint_dir".into()));
        }
        Ok(())
    }

    /// Generator configuration for width `h` and one run seed.
    pub fn generator_config(&self, h: usize, run_seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            encoder_kind: self.encoder_kind,
            variant: self.variant,
            decoder_hidden: h,
            feature_dim: DEEPSETS_OUTPUT,
            cme: CmeConfig { seed: rng::derive(run_seed, &[rng::STREAM_RFF]), ..CmeConfig::default() },
            seed: rng::derive(run_seed, &[rng::STREAM_INIT]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: GeneratorModel,
    /// Mean loss before any update.
    pub initial_loss: f64,
    pub history: Vec<EpochRecord>,
}

/// Per-dataset loss targets and cached features for one model configuration.
pub struct MetaObjective {
    datasets: Vec<PairDataset>,
    targets: Vec<MmdTarget>,
    features: Vec<Option<DatasetFeature>>,
}

impl MetaObjective {
    pub fn new(model: &GeneratorModel, datasets: Vec<PairDataset>, bands: &BandwidthSet, estimator: MmdEstimator, seed: u64) -> Result<Self> {
        if datasets.is_empty() {
            return Err(Error::Precondition("training database is empty".into()));
        }
        let targets = datasets
            .iter()
            .enumerate()
            .map(|(i, d)| MmdTarget::new(&d.x, &d.y, bands, estimator, rng::derive(seed, &[i as u64])))
            .collect::<Result<_>>()?;
        let features = datasets.iter().map(|d| model.cached_feature(d)).collect::<Result<_>>()?;
        Ok(Self { datasets, targets, features })
    }

    pub fn len(&self) -> usize {
        self.datasets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.datasets.is_empty()
    }

    pub fn datasets(&self) -> &[PairDataset] {
        &self.datasets
    }

    /// Summed loss over `batch` with the given noise; accumulates gradients when `train`.
    ///
    /// Gradients are added to whatever the model already holds.
    pub fn batch_loss(&self, model: &mut GeneratorModel, batch: &[usize], noise: &[Vec<f64>], train: bool, epoch: usize) -> Result<f64> {
        if noise.len() != batch.len() {
            return Err(Error::Shape(format!("{} noise vectors for {} datasets", noise.len(), batch.len())));
        }
        let mut total = 0.0;
        for (&i, z) in batch.iter().zip(noise) {
            let loss = model.loss_step(&self.datasets[i], self.features[i].as_ref(), &self.targets[i], z, train)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, dataset: i });
            }
            total += loss;
        }
        Ok(total)
    }

    fn noise(&self, run_seed: u64, epoch: usize, i: usize) -> Vec<f64> {
        rng::normals(rng::derive(run_seed, &[rng::STREAM_NOISE, epoch as u64, i as u64]), self.datasets[i].len())
    }

    /// Mean per-dataset loss with noise drawn for `epoch`.
    pub fn mean_loss(&self, model: &mut GeneratorModel, run_seed: u64, epoch: usize) -> Result<f64> {
        let all: Vec<usize> = (0..self.len()).collect();
        let noise: Vec<Vec<f64>> = all.iter().map(|&i| self.noise(run_seed, epoch, i)).collect();
        Ok(self.batch_loss(model, &all, &noise, false, epoch)? / self.len() as f64)
    }
}

fn append_progress(config: &TrainConfig, run_seed: u64, rec: &EpochRecord) -> Result<()> {
    if let Some(path) = &config.progress_log {
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        let line = serde_json::json!({"run_seed": run_seed, "epoch": rec.epoch, "mean_loss": rec.mean_loss});
        writeln!(f, "{line}")?;
    }
    Ok(())
}

/// Trains one generator on the causal orientation of every dataset in `db`.
pub fn train(db: &CeDatabase, config: &TrainConfig, h: usize, run_seed: u64) -> Result<GeneratorModel> {
    Ok(train_with_history(db, config, h, run_seed)?.model)
}

pub fn train_with_history(db: &CeDatabase, config: &TrainConfig, h: usize, run_seed: u64) -> Result<TrainOutcome> {
    config.validate()?;
    if db.is_empty() {
        return Err(Error::Precondition("training database is empty".into()));
    }
    let mut model = GeneratorModel::new(config.generator_config(h, run_seed))?;
    let objective = MetaObjective::new(
        &model,
        db.causal(),
        &config.bandwidths,
        config.estimator,
        rng::derive(run_seed, &[rng::STREAM_RFF, 1]),
    )?;
    let initial_loss = objective.mean_loss(&mut model, run_seed, 0)?;
    let mut adam = AdamState::new(model.trainable_params(), config.lr)?;
    let mut order: Vec<usize> = (0..objective.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::rng(rng::derive(run_seed, &[rng::STREAM_SHUFFLE, epoch as u64])));
        let mut total = 0.0;
        for batch in order.chunks(config.batch_datasets) {
            model.zero_grad();
            let noise: Vec<Vec<f64>> = batch.iter().map(|&i| objective.noise(run_seed, epoch, i)).collect();
            total += objective.batch_loss(&mut model, batch, &noise, true, epoch)?;
            adam.step(&mut model.trainable_params_mut())?;
        }
        if !model.all_finite() {
            return Err(Error::Numeric(format!("non-finite parameter after epoch {epoch}")));
        }
        let rec = EpochRecord { epoch, mean_loss: total / objective.len() as f64 };
        log::debug!("run {run_seed:016x} epoch {epoch} loss {:.6}", rec.mean_loss);
        append_progress(config, run_seed, &rec)?;
        history.push(rec);
        if config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 {
            if let Some(dir) = &config.checkpoint_dir {
                std::fs::create_dir_all(dir)?;
                model
                    .to_checkpoint(epoch, serde_json::json!({"run_seed": run_seed}))?
                    .save(dir.join(format!("run_{run_seed:016x}_epoch_{epoch:05}.ckpt")))?;
            }
        }
    }
    Ok(TrainOutcome { model, initial_loss, history })
}

/// Models trained from `config.master_seed`, sharing one decoder width.
#[derive(Debug, Clone)]
pub struct TrainedEnsemble {
    pub models: Vec<GeneratorModel>,
    pub decoder_hidden: usize,
    /// Validation accuracy per candidate width when selection ran.
    pub width_scores: Vec<(usize, f64)>,
    pub initial_losses: Vec<f64>,
    pub histories: Vec<Vec<EpochRecord>>,
}

impl TrainedEnsemble {
    /// Writes `member_NNN.ckpt` files into `dir`.
    pub fn save(&self, dir: impl AsRef<std::path::Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for (k, m) in self.models.iter().enumerate() {
            let epochs = self.histories.get(k).map_or(0, Vec::len);
            m.to_checkpoint(epochs, serde_json::json!({"member": k, "decoder_hidden": self.decoder_hidden}))?
                .save(dir.join(format!("member_{k:03}.ckpt")))?;
        }
        Ok(())
    }

    /// Loads every `member_NNN.ckpt` in `dir`, in member order.
    pub fn load(dir: impl AsRef<std::path::Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut models = Vec::new();
        loop {
            let path = dir.join(format!("member_{:03}.ckpt", models.len()));
            if !path.exists() {
                break;
            }
            models.push(GeneratorModel::from_checkpoint(&crate::checkpoint::Checkpoint::load(path)?)?);
        }
        if models.is_empty() {
            return Err(Error::Checkpoint(format!("no member checkpoints in {}", dir.display())));
        }
        let decoder_hidden = models[0].config.decoder_hidden;
        if models.iter().any(|m| m.config.decoder_hidden != decoder_hidden) {
            return Err(Error::Checkpoint("ensemble members disagree on decoder width".into()));
        }
        Ok(Self { models, decoder_hidden, width_scores: Vec::new(), initial_losses: Vec::new(), histories: Vec::new() })
    }
}

pub fn member_seed(master_seed: u64, k: usize) -> u64 {
    rng::derive(master_seed, &[0x656e_7365_6d62, k as u64])
}

/// Picks the candidate width with the best validation direction accuracy.
///
/// The validation slice is a seeded `validation_fraction` of `db`; one model
/// per candidate is trained on the rest. Ties favour the later candidate.
pub fn select_decoder_width(db: &CeDatabase, config: &TrainConfig) -> Result<Vec<(usize, f64)>> {
    let n = db.len();
    let n_val = ((n as f64 * config.validation_fraction).round() as usize).clamp(1, n.saturating_sub(1));
    if n < 2 {
        return Err(Error::Precondition("width selection needs at least 2 datasets".into()));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::rng(rng::derive(config.master_seed, &[rng::STREAM_SHUFFLE, 0x7661_6c])));
    let (val, tr) = idx.split_at(n_val);
    let train_db = db.subset(tr);
    let val_db = db.subset(val);
    config
        .width_candidates
        .iter()
        .map(|&h| {
            let model = train(&train_db, config, h, rng::derive(config.master_seed, &[0x7769_6474_68, h as u64]))?;
            let scores = val_db
                .presented()
                .iter()
                .enumerate()
                .map(|(i, d)| score_direction_with(&model, d, eval_seed(config.master_seed, i), &config.bandwidths))
                .collect::<Result<Vec<_>>>()?;
            let correct = scores.iter().zip(val_db.presented()).filter(|(s, d)| s.predicted.is_correct(d.label)).count();
            Ok((h, correct as f64 / scores.len() as f64))
        })
        .collect()
}

/// Noise seed for scoring the `i`-th evaluation dataset.
pub fn eval_seed(master_seed: u64, i: usize) -> u64 {
    rng::derive(master_seed, &[rng::STREAM_EVAL, i as u64])
}

pub fn train_ensemble(db: &CeDatabase, config: &TrainConfig) -> Result<TrainedEnsemble> {
    config.validate()?;
    let (h, width_scores) = match config.decoder_hidden {
        DecoderWidth::Fixed(h) => (h, Vec::new()),
        DecoderWidth::Auto => {
            let scores = select_decoder_width(db, config)?;
            let best = scores.iter().fold(scores[0], |b, &s| if s.1 >= b.1 { s } else { b });
            log::info!("decoder width validation scores {scores:?}, using h = {}", best.0);
            (best.0, scores)
        }
    };
    let outcomes = (0..config.ensemble_size)
        .into_par_iter()
        .map(|k| train_with_history(db, config, h, member_seed(config.master_seed, k)))
        .collect::<Result<Vec<_>>>()?;
    let mut ens =
        TrainedEnsemble { models: Vec::new(), decoder_hidden: h, width_scores, initial_losses: Vec::new(), histories: Vec::new() };
    for o in outcomes {
        ens.models.push(o.model);
        ens.initial_losses.push(o.initial_loss);
        ens.histories.push(o.history);
    }
    Ok(ens)
}

/// Decision of the direction rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    XToY,
    YToX,
    Tie,
}

impl Prediction {
    pub fn as_str(self) -> &'static str {
        match self {
            Prediction::XToY => "x_to_y",
            Prediction::YToX => "y_to_x",
            Prediction::Tie => "tie",
        }
    }

    /// Ties and unknown labels never count as correct.
    pub fn is_correct(self, label: Direction) -> bool {
        matches!((self, label), (Prediction::XToY, Direction::XToY) | (Prediction::YToX, Direction::YToX))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionScore {
    pub m_xy: f64,
    pub m_yx: f64,
    /// `m_yx - m_xy`; positive favours `x -> y`.
    pub s: f64,
    pub predicted: Prediction,
}

impl DirectionScore {
    pub fn from_mmds(m_xy: f64, m_yx: f64) -> Self {
        Self::from_score(m_xy, m_yx, m_yx - m_xy)
    }

    /// Uses `s` as given, for statistics that are not a difference of fits.
    pub fn from_score(m_xy: f64, m_yx: f64, s: f64) -> Self {
        let predicted = if s > 0.0 {
            Prediction::XToY
        } else if s < 0.0 {
            Prediction::YToX
        } else {
            Prediction::Tie
        };
        Self { m_xy, m_yx, s, predicted }
    }
}

/// Anything that can sample an effect column for a dataset's cause column.
pub trait Sampler {
    fn sample(&self, d: &PairDataset, noise_seed: u64) -> Result<Vec<f64>>;
}

impl Sampler for GeneratorModel {
    fn sample(&self, d: &PairDataset, noise_seed: u64) -> Result<Vec<f64>> {
        self.generate(d, noise_seed)
    }
}

/// MMD² between the dataset and its generated counterpart `(x, yhat)`.
pub fn fit_mmd<S: Sampler + ?Sized>(model: &S, d: &PairDataset, noise_seed: u64, bands: &BandwidthSet) -> Result<f64> {
    let yhat = model.sample(d, noise_seed)?;
    let real = d.joint();
    let mut fake = Vec::with_capacity(real.len());
    for (x, y) in d.x.iter().zip(&yhat) {
        fake.push(*x);
        fake.push(*y);
    }
    mmd2_unbiased(&fake, &real, 2, bands)
}

pub fn score_direction<S: Sampler + ?Sized>(model: &S, d: &PairDataset, noise_seed: u64) -> Result<DirectionScore> {
    score_direction_with(model, d, noise_seed, &BandwidthSet::default())
}

/// Scores both `D^{xy}` and the swapped `D^{yx}` with the same noise seed.
pub fn score_direction_with<S: Sampler + ?Sized>(
    model: &S,
    d: &PairDataset,
    noise_seed: u64,
    bands: &BandwidthSet,
) -> Result<DirectionScore> {
    if d.len() < 2 {
        return Err(Error::Precondition(format!("{}: scoring needs at least 2 points", d.name)));
    }
    let m_xy = fit_mmd(model, d, noise_seed, bands)?;
    let m_yx = fit_mmd(model, &d.swapped(), noise_seed, bands)?;
    Ok(DirectionScore::from_mmds(m_xy, m_yx))
}

/// Averages `m_xy` and `m_yx` over the ensemble, then applies the rule once.
pub fn ensemble_score<S: Sampler>(models: &[S], d: &PairDataset, noise_seed: u64, bands: &BandwidthSet) -> Result<DirectionScore> {
    if models.is_empty() {
        return Err(Error::Precondition("ensemble is empty".into()));
    }
    let mut m_xy = 0.0;
    let mut m_yx = 0.0;
    for model in models {
        let s = score_direction_with(model, d, noise_seed, bands)?;
        m_xy += s.m_xy;
        m_yx += s.m_yx;
    }
    let k = models.len() as f64;
    Ok(DirectionScore::from_mmds(m_xy / k, m_yx / k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tie_rule() {
        assert_eq!(DirectionScore::from_mmds(0.2, 0.2).predicted, Prediction::Tie);
        assert_eq!(DirectionScore::from_mmds(0.1, 0.3).predicted, Prediction::XToY);
        assert_eq!(DirectionScore::from_mmds(0.3, 0.1).predicted, Prediction::YToX);
        assert!(!Prediction::Tie.is_correct(Direction::XToY));
    }

    struct Fixed(f64, f64);
    impl Sampler for Fixed {
        fn sample(&self, d: &PairDataset, _: u64) -> Result<Vec<f64>> {
            Ok(d.x.iter().map(|x| self.0 * x + self.1).collect())
        }
    }

    #[test]
    fn ensemble_averages_mmds_not_votes() {
        let d = PairDataset::new("d", vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 2.0], Direction::XToY).unwrap();
        let bands = BandwidthSet::default();
        let a = score_direction_with(&Fixed(0.0, 3.0), &d, 1, &bands).unwrap();
        let b = score_direction_with(&Fixed(5.0, 0.5), &d, 1, &bands).unwrap();
        let e = ensemble_score(&[Fixed(0.0, 3.0), Fixed(5.0, 0.5)], &d, 1, &bands).unwrap();
        assert!((e.m_xy - (a.m_xy + b.m_xy) / 2.0).abs() < 1e-15);
        assert!((e.m_yx - (a.m_yx + b.m_yx) / 2.0).abs() < 1e-15);
        let empty: [Fixed; 0] = [];
        assert!(matches!(ensemble_score(&empty, &d, 1, &bands), Err(Error::Precondition(_))));
    }

    #[test]
    fn decoder_width_parse() {
        assert_eq!("auto".parse::<DecoderWidth>().unwrap(), DecoderWidth::Auto);
        assert_eq!("5".parse::<DecoderWidth>().unwrap(), DecoderWidth::Fixed(5));
        assert!("0".parse::<DecoderWidth>().is_err());
    }
}
