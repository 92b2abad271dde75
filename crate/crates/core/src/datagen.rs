//! Synthetic cause-effect databases.
//!
//! Three families, each pair regenerable from its [`PairSpec`]:
//!
//! - `net`: cause from a random Gaussian mixture, effect `y = NN([x, e])` for
//!   a random one-hidden-layer ReLU network of width 20;
//! - `gauss`: cause from a random Gaussian mixture, effect
//!   `y = f(x) + sigma e` where `f` is a 200-feature random Fourier
//!   approximation of an RBF Gaussian-process path;
//! - `multi`: cause `N(0, 1)`, linear or polynomial mechanism of degree at
//!   most 3, with additive or multiplicative noise applied before or after it.
//!
//! Cause, mechanism and noise parameters come from separate seeded streams,
//! so the noise is independent of the cause by construction. Every dataset is
//! standardized; pairs that degenerate to a constant column are redrawn with
//! an incremented `attempt` recorded in the [`PairSpec`].

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{standardize, Direction, PairDataset};
use crate::error::{Error, Result};
use crate::io;
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Net,
    Gauss,
    Multi,
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "net" => Ok(Family::Net),
            "gauss" => Ok(Family::Gauss),
            "multi" => Ok(Family::Multi),
            _ => Err(Error::Config(format!("unknown family {s:?} (expected net, gauss or multi)"))),
        }
    }
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Net => "net",
            Family::Gauss => "gauss",
            Family::Multi => "multi",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    AdditivePre,
    AdditivePost,
    MultiplicativePre,
    MultiplicativePost,
}

pub const NOISE_MODES: [NoiseMode; 4] =
    [NoiseMode::AdditivePre, NoiseMode::AdditivePost, NoiseMode::MultiplicativePre, NoiseMode::MultiplicativePost];

/// Everything needed to regenerate one pair bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub family: Family,
    pub index: usize,
    pub mechanism_seed: u64,
    pub cause_seed: u64,
    pub noise_seed: u64,
    pub n_points: usize,
    /// Redraw counter; seeds above already include it.
    pub attempt: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_mode: Option<NoiseMode>,
}

impl PairSpec {
    pub fn derive(family: Family, master_seed: u64, index: usize, n_points: usize, attempt: u32) -> Self {
        let base = rng::derive(master_seed, &[family as u64, index as u64, attempt as u64]);
        let mechanism_seed = rng::derive(base, &[rng::STREAM_MECHANISM]);
        let noise_mode = (family == Family::Multi).then(|| NOISE_MODES[rng::rng(mechanism_seed).gen_range(0..4)]);
        Self {
            family,
            index,
            mechanism_seed,
            cause_seed: rng::derive(base, &[rng::STREAM_CAUSE]),
            noise_seed: rng::derive(base, &[rng::STREAM_NOISE]),
            n_points,
            attempt,
            noise_mode,
        }
    }

    /// Raw (unstandardized) sample in causal orientation.
    pub fn sample_raw(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_points;
        let mut noise = rng::rng(self.noise_seed);
        let e: Vec<f64> = (0..n).map(|_| rng::normal(&mut noise)).collect();
        match self.family {
            Family::Net => {
                let x = GaussianMixture::random(&mut rng::rng(self.cause_seed)).sample(n, self.cause_seed);
                let mech = NetMechanism::random(self.mechanism_seed);
                let y = x.iter().zip(&e).map(|(&a, &b)| mech.eval(a, b)).collect();
                (x, y)
            }
            Family::Gauss => {
                let x = GaussianMixture::random(&mut rng::rng(self.cause_seed)).sample(n, self.cause_seed);
                let mech = GaussMechanism::random(self.mechanism_seed);
                let y = x.iter().zip(&e).map(|(&a, &b)| mech.eval(a) + mech.noise_scale * b).collect();
                (x, y)
            }
            Family::Multi => {
                let x = rng::normals(self.cause_seed, n);
                let mech = MultiMechanism::random(self.mechanism_seed, self.noise_mode.unwrap_or(NoiseMode::AdditivePost));
                let y = x.iter().zip(&e).map(|(&a, &b)| mech.apply(a, b)).collect();
                (x, y)
            }
        }
    }

    /// Standardized dataset in causal orientation, labelled `x_to_y`.
    pub fn generate(&self) -> Result<PairDataset> {
        let (x, y) = self.sample_raw();
        let name = format!("{}_{:04}", self.family.as_str(), self.index);
        standardize(&PairDataset::new(name, x, y, Direction::XToY)?)
    }
}

/// Mixture of 1-5 Gaussians; means `N(0, 2)` (variance 2), scales `U[0.5, 1.5]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl GaussianMixture {
    pub fn random(r: &mut Rng) -> Self {
        let k = r.gen_range(1..=5);
        let raw: Vec<f64> = (0..k).map(|_| r.gen_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        Self {
            weights: raw.iter().map(|w| w / total).collect(),
            means: (0..k).map(|_| 2f64.sqrt() * rng::normal(r)).collect(),
            scales: (0..k).map(|_| r.gen_range(0.5..1.5)).collect(),
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::rng(rng::derive(seed, &[0]));
        (0..n)
            .map(|_| {
                let u: f64 = r.gen();
                let mut acc = 0.0;
                let mut c = self.weights.len() - 1;
                for (i, w) in self.weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        c = i;
                        break;
                    }
                }
                self.means[c] + self.scales[c] * rng::normal(&mut r)
            })
            .collect()
    }
}

pub const NET_HIDDEN: usize = 20;

/// `y = sum_k v_k relu(a_k x + b_k e + c_k) + d` with standard-normal parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NetMechanism {
    w_in: Vec<[f64; 3]>,
    w_out: Vec<f64>,
    bias: f64,
}

impl NetMechanism {
    pub fn random(seed: u64) -> Self {
        let mut r = rng::rng(seed);
        let w_in = (0..NET_HIDDEN).map(|_| [rng::normal(&mut r), rng::normal(&mut r), rng::normal(&mut r)]).collect();
        let w_out = (0..NET_HIDDEN).map(|_| rng::normal(&mut r)).collect();
        Self { w_in, w_out, bias: rng::normal(&mut r) }
    }

    pub fn eval(&self, x: f64, e: f64) -> f64 {
        self.bias
            + self.w_in.iter().zip(&self.w_out).map(|(w, v)| v * (w[0] * x + w[1] * e + w[2]).max(0.0)).sum::<f64>()
    }
}

pub const GP_FEATURES: usize = 200;

/// Random-feature path `f(x) = sum_k a_k sqrt(2/K) cos(w_k x + b_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussMechanism {
    pub lengthscale: f64,
    amplitudes: Vec<f64>,
    frequencies: Vec<f64>,
    phases: Vec<f64>,
    pub noise_scale: f64,
}

impl GaussMechanism {
    pub fn random(seed: u64) -> Self {
        let mut r = rng::rng(seed);
        let lengthscale = r.gen_range(0.5..2.0);
        let amplitudes = (0..GP_FEATURES).map(|_| rng::normal(&mut r)).collect();
        let frequencies = (0..GP_FEATURES).map(|_| rng::normal(&mut r) / lengthscale).collect();
        let phases = (0..GP_FEATURES).map(|_| r.gen_range(0.0..2.0 * PI)).collect();
        let noise_scale = r.gen_range(0.1..0.5);
        Self { lengthscale, amplitudes, frequencies, phases, noise_scale }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let s = (2.0 / GP_FEATURES as f64).sqrt();
        self.amplitudes
            .iter()
            .zip(&self.frequencies)
            .zip(&self.phases)
            .map(|((a, w), b)| a * s * (w * x + b).cos())
            .sum()
    }

    /// Analytic Lipschitz bound `sum_k |a_k| sqrt(2/K) |w_k|`.
    pub fn lipschitz_bound(&self) -> f64 {
        let s = (2.0 / GP_FEATURES as f64).sqrt();
        self.amplitudes.iter().zip(&self.frequencies).map(|(a, w)| (a * w).abs() * s).sum()
    }
}

/// Polynomial mechanism with one of the four noise placements.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiMechanism {
    /// `c_0 + c_1 x + ... + c_d x^d`.
    pub coefficients: Vec<f64>,
    pub mode: NoiseMode,
    pub noise_scale: f64,
}

impl MultiMechanism {
    /// Degree uniform in {1, 2, 3}, coefficients `N(0, 1)` with the leading
    /// one kept away from zero, noise scale `U[0.1, 0.4]`.
    pub fn random(seed: u64, mode: NoiseMode) -> Self {
        let mut r = rng::rng(rng::derive(seed, &[1]));
        let degree = r.gen_range(1..=3);
        let mut coefficients: Vec<f64> = (0..=degree).map(|_| rng::normal(&mut r)).collect();
        let lead = &mut coefficients[degree];
        if lead.abs() < 0.2 {
            *lead = 0.2f64.copysign(*lead);
        }
        Self { coefficients, mode, noise_scale: r.gen_range(0.1..0.4) }
    }

    pub fn poly(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn apply(&self, x: f64, e: f64) -> f64 {
        let s = self.noise_scale;
        match self.mode {
            NoiseMode::AdditivePre => self.poly(x + s * e),
            NoiseMode::AdditivePost => self.poly(x) + s * e,
            NoiseMode::MultiplicativePre => self.poly(x * (1.0 + s * e)),
            NoiseMode::MultiplicativePost => self.poly(x) * (1.0 + s * e),
        }
    }
}

/// One database entry: data in causal orientation plus its presentation flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeEntry {
    pub spec: Option<PairSpec>,
    /// Stored as `x -> y`.
    pub causal: PairDataset,
    /// Presented to evaluators with columns swapped.
    pub flipped: bool,
    #[serde(default)]
    pub diagnostics: BTreeMap<String, f64>,
}

impl CeEntry {
    pub fn presented(&self) -> PairDataset {
        if self.flipped {
            self.causal.swapped()
        } else {
            self.causal.clone()
        }
    }
}

/// A labelled collection of cause-effect pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeDatabase {
    pub family: String,
    pub master_seed: u64,
    pub entries: Vec<CeEntry>,
}

const MAX_ATTEMPTS: u32 = 32;

fn generate_pair(family: Family, n_points: usize, master_seed: u64, index: usize) -> Result<CeEntry> {
    if n_points < 2 {
        return Err(Error::Precondition("pairs need at least 2 points".into()));
    }
    let mut last_err = None;
    for attempt in 0..MAX_ATTEMPTS {
        let spec = PairSpec::derive(family, master_seed, index, n_points, attempt);
        match spec.generate() {
            Ok(causal) => {
                let flipped = rng::rng(rng::derive(master_seed, &[family as u64, index as u64, rng::STREAM_ORIENTATION]))
                    .gen_bool(0.5);
                let mut diagnostics = BTreeMap::new();
                diagnostics.insert("cause_modes".to_string(), histogram_modes(&causal.x, 20) as f64);
                diagnostics.insert("conditional_std_spread".to_string(), conditional_std_spread(&causal, 10));
                return Ok(CeEntry { spec: Some(spec), causal, flipped, diagnostics });
            }
            Err(e @ Error::Degenerate { .. }) => {
                log::debug!("pair {index} attempt {attempt} degenerate: {e}");
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::Numeric("pair generation failed".into())))
}

fn generate_family(family: Family, n_pairs: usize, n_points: usize, master_seed: u64) -> Result<CeDatabase> {
    if n_pairs == 0 {
        return Err(Error::Precondition("need at least one pair".into()));
    }
    let entries = (0..n_pairs).map(|i| generate_pair(family, n_points, master_seed, i)).collect::<Result<_>>()?;
    Ok(CeDatabase { family: family.as_str().to_string(), master_seed, entries })
}

pub fn gen_ce_net(n_pairs: usize, n_points: usize, master_seed: u64) -> Result<CeDatabase> {
    generate_family(Family::Net, n_pairs, n_points, master_seed)
}

pub fn gen_ce_gauss(n_pairs: usize, n_points: usize, master_seed: u64) -> Result<CeDatabase> {
    generate_family(Family::Gauss, n_pairs, n_points, master_seed)
}

pub fn gen_ce_multi(n_pairs: usize, n_points: usize, master_seed: u64) -> Result<CeDatabase> {
    generate_family(Family::Multi, n_pairs, n_points, master_seed)
}

pub fn generate(family: Family, n_pairs: usize, n_points: usize, master_seed: u64) -> Result<CeDatabase> {
    generate_family(family, n_pairs, n_points, master_seed)
}

/// Number of local maxima in an equal-width histogram.
pub fn histogram_modes(v: &[f64], bins: usize) -> usize {
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if !(hi > lo) {
        return 1;
    }
    let mut h = vec![0usize; bins];
    for &x in v {
        let b = (((x - lo) / (hi - lo)) * bins as f64) as usize;
        h[b.min(bins - 1)] += 1;
    }
    (0..bins)
        .filter(|&i| {
            let left = if i == 0 { 0 } else { h[i - 1] };
            let right = if i + 1 == bins { 0 } else { h[i + 1] };
            h[i] > left && h[i] >= right
        })
        .count()
}

/// Standard deviation across equal-count `x` bins of the per-bin std of `y`.
pub fn conditional_std_spread(d: &PairDataset, bins: usize) -> f64 {
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.sort_by(|&a, &b| d.x[a].total_cmp(&d.x[b]));
    let stds: Vec<f64> = idx
        .chunks(d.len().div_ceil(bins).max(2))
        .filter(|c| c.len() >= 2)
        .map(|c| crate::data::mean_std(&c.iter().map(|&i| d.y[i]).collect::<Vec<_>>()).1)
        .collect();
    crate::data::mean_std(&stds).1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    file: String,
    family: String,
    label: Direction,
    orientation: String,
    weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spec: Option<PairSpec>,
    #[serde(default)]
    diagnostics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    family: String,
    master_seed: u64,
    pairs: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl CeDatabase {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Datasets in their presented orientation, labels relative to it.
    pub fn presented(&self) -> Vec<PairDataset> {
        self.entries.iter().map(CeEntry::presented).collect()
    }

    /// Datasets in causal orientation (`x -> y`).
    pub fn causal(&self) -> Vec<PairDataset> {
        self.entries.iter().map(|e| e.causal.clone()).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            family: self.family.clone(),
            master_seed: self.master_seed,
            entries: idx.iter().map(|&i| self.entries[i].clone()).collect(),
        }
    }

    /// Writes one presented-orientation pair file per entry plus `manifest.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut pairs = Vec::with_capacity(self.len());
        for e in &self.entries {
            let p = e.presented();
            let file = format!("{}.txt", e.causal.name);
            io::write_pair_file(dir.join(&file), &p)?;
            pairs.push(ManifestEntry {
                name: e.causal.name.clone(),
                file,
                family: self.family.clone(),
                label: p.label,
                orientation: if e.flipped { "flipped" } else { "causal" }.to_string(),
                weight: e.causal.weight,
                spec: e.spec.clone(),
                diagnostics: e.diagnostics.clone(),
            });
        }
        let manifest = Manifest { family: self.family.clone(), master_seed: self.master_seed, pairs };
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        let mut entries = Vec::with_capacity(manifest.pairs.len());
        for m in manifest.pairs {
            let mut p = io::read_pair_file(dir.join(&m.file))?;
            p.name = m.name.clone();
            p.label = m.label;
            p.weight = m.weight;
            let flipped = match m.orientation.as_str() {
                "flipped" => true,
                "causal" => false,
                other => return Err(Error::Config(format!("{}: unknown orientation {other:?}", m.name))),
            };
            let causal = if flipped { p.swapped() } else { p };
            if causal.label != Direction::XToY {
                return Err(Error::Config(format!("{}: label inconsistent with orientation", m.name)));
            }
            entries.push(CeEntry { spec: m.spec, causal, flipped, diagnostics: m.diagnostics });
        }
        Ok(Self { family: manifest.family, master_seed: manifest.master_seed, entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_zero_noise_is_exact_polynomial() {
        let mut mech = MultiMechanism::random(17, NoiseMode::AdditivePost);
        mech.noise_scale = 0.0;
        let x = rng::normals(3, 50);
        let y: Vec<f64> = x.iter().map(|&a| mech.apply(a, 1.7)).collect();
        // Refit by least squares at the true degree and check the residual.
        let deg = mech.coefficients.len() - 1;
        let a = nalgebra::DMatrix::from_fn(x.len(), deg + 1, |i, j| x[i].powi(j as i32));
        let b = nalgebra::DVector::from_column_slice(&y);
        let fit = a.clone().svd(true, true).solve(&b, 1e-12).unwrap();
        let resid = (a * fit - b).norm() / (x.len() as f64).sqrt();
        assert!(resid < 1e-8, "{resid}");
    }

    #[test]
    fn specs_regenerate_identically() {
        let spec = PairSpec::derive(Family::Gauss, 5, 3, 40, 0);
        assert_eq!(spec.generate().unwrap(), spec.generate().unwrap());
        assert_ne!(spec.noise_seed, spec.cause_seed);
    }

    #[test]
    fn histogram_modes_counts_peaks() {
        let mut v: Vec<f64> = rng::normals(1, 2000).iter().map(|z| z * 0.3 - 3.0).collect();
        v.extend(rng::normals(2, 2000).iter().map(|z| z * 0.3 + 3.0));
        assert!(histogram_modes(&v, 20) >= 2);
    }

    #[test]
    fn family_parse() {
        assert_eq!("multi".parse::<Family>().unwrap(), Family::Multi);
        assert!("tree".parse::<Family>().is_err());
    }
}
