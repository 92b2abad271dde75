//! Gaussian kernels, MMD estimators and random Fourier features.
//!
//! Sample sets are passed as flat row-major buffers together with their point
//! dimension, e.g. `m` 2-D points occupy `2 m` values.
//!
//! The kernel is parameterized by a precision multiplier,
//! `k(u, v) = exp(-eta * |u - v|^2)`, and every MMD here is a sum over a
//! [`BandwidthSet`].

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::rng;

/// Default precision multipliers for the multi-bandwidth MMD.
pub const DEFAULT_ETAS: [f64; 7] = [0.005, 0.05, 0.25, 0.5, 1.0, 5.0, 50.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSet {
    etas: Vec<f64>,
}

impl Default for BandwidthSet {
    fn default() -> Self {
        Self { etas: DEFAULT_ETAS.to_vec() }
    }
}

impl BandwidthSet {
    pub fn new(etas: Vec<f64>) -> Result<Self> {
        if etas.is_empty() {
            return Err(Error::Config("bandwidth set is empty".into()));
        }
        if etas.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::Config(format!("bandwidths must be positive: {etas:?}")));
        }
        Ok(Self { etas })
    }

    pub fn etas(&self) -> &[f64] {
        &self.etas
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn gaussian_kernel(u: &[f64], v: &[f64], eta: f64) -> Result<f64> {
    if u.len() != v.len() {
        return shape_err(format!("kernel arguments have dimensions {} and {}", u.len(), v.len()));
    }
    if !(eta > 0.0) {
        return Err(Error::Config(format!("eta must be positive, got {eta}")));
    }
    Ok((-eta * sq_dist(u, v)).exp())
}

fn check_sets(u: &[f64], v: &[f64], dim: usize, min: usize) -> Result<(usize, usize)> {
    if dim == 0 || u.len() % dim != 0 || v.len() % dim != 0 {
        return shape_err(format!("sample buffers of length {} and {} are not multiples of dim {dim}", u.len(), v.len()));
    }
    let (m, n) = (u.len() / dim, v.len() / dim);
    if m < min || n < min {
        return Err(Error::Precondition(format!("MMD needs at least {min} points per set, got {m} and {n}")));
    }
    Ok((m, n))
}

/// Unbiased MMD² summed over bandwidths.
///
/// Within-set sums skip the diagonal, the cross sum keeps it. The value can be
/// negative when the two samples are close.
pub fn mmd2_unbiased(u: &[f64], v: &[f64], dim: usize, bands: &BandwidthSet) -> Result<f64> {
    mmd2_unbiased_grad(u, v, dim, bands, false).map(|r| r.0)
}

/// MMD² with gradients with respect to every coordinate of `u` and `v`.
pub fn mmd2_unbiased_with_grad(
    u: &[f64],
    v: &[f64],
    dim: usize,
    bands: &BandwidthSet,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    mmd2_unbiased_grad(u, v, dim, bands, true)
}

fn mmd2_unbiased_grad(
    u: &[f64],
    v: &[f64],
    dim: usize,
    bands: &BandwidthSet,
    want_grad: bool,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (m, n) = check_sets(u, v, dim, 2)?;
    let etas = bands.etas();
    let mut du = if want_grad { vec![0.0; u.len()] } else { Vec::new() };
    let mut dv = if want_grad { vec![0.0; v.len()] } else { Vec::new() };

    // Returns sum_b k_b and sum_b (-2 eta_b) k_b for one squared distance.
    let eval = |d2: f64| -> (f64, f64) {
        let mut k = 0.0;
        let mut dk = 0.0;
        for &eta in etas {
            let e = (-eta * d2).exp();
            k += e;
            dk -= 2.0 * eta * e;
        }
        (k, dk)
    };

    let within = |pts: &[f64], count: usize, grad: &mut Vec<f64>| -> f64 {
        let c = 2.0 / (count as f64 * (count as f64 - 1.0));
        let mut total = 0.0;
        for i in 0..count {
            let a = &pts[i * dim..(i + 1) * dim];
            for j in (i + 1)..count {
                let b = &pts[j * dim..(j + 1) * dim];
                let (k, dk) = eval(sq_dist(a, b));
                total += k;
                if want_grad {
                    for d in 0..dim {
                        let g = c * dk * (a[d] - b[d]);
                        grad[i * dim + d] += g;
                        grad[j * dim + d] -= g;
                    }
                }
            }
        }
        c * total
    };
    let uu = within(u, m, &mut du);
    let vv = within(v, n, &mut dv);

    let c = 2.0 / (m as f64 * n as f64);
    let mut cross = 0.0;
    for i in 0..m {
        let a = &u[i * dim..(i + 1) * dim];
        for j in 0..n {
            let b = &v[j * dim..(j + 1) * dim];
            let (k, dk) = eval(sq_dist(a, b));
            cross += k;
            if want_grad {
                for d in 0..dim {
                    let g = c * dk * (a[d] - b[d]);
                    du[i * dim + d] -= g;
                    dv[j * dim + d] += g;
                }
            }
        }
    }
    Ok((uu + vv - c * cross, du, dv))
}

/// Random Fourier feature map approximating `exp(-|x - x'|^2 / (2 l^2))`.
///
/// Features come in `(cos, sin)` pairs scaled by `sqrt(2 / D)` so `|z(x)|^2 = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RffMap {
    /// `[D/2 x input_dim]`, rows drawn from `N(0, I / l^2)`.
    frequencies: Vec<f64>,
    input_dim: usize,
    dimension: usize,
    lengthscale: f64,
    seed: u64,
}

impl RffMap {
    pub fn new(input_dim: usize, dimension: usize, lengthscale: f64, seed: u64) -> Result<Self> {
        if dimension == 0 || dimension % 2 != 0 {
            return Err(Error::Config(format!("RFF dimension must be even and positive, got {dimension}")));
        }
        if input_dim == 0 {
            return Err(Error::Config("RFF input dimension must be positive".into()));
        }
        if !(lengthscale > 0.0) {
            return Err(Error::Config(format!("lengthscale must be positive, got {lengthscale}")));
        }
        let frequencies = rng::normals(rng::derive(seed, &[rng::STREAM_RFF]), dimension / 2 * input_dim)
            .into_iter()
            .map(|w| w / lengthscale)
            .collect();
        Ok(Self { frequencies, input_dim, dimension, lengthscale, seed })
    }

    /// Map whose kernel equals `exp(-eta |.|^2)`, i.e. `l = 1 / sqrt(2 eta)`.
    pub fn for_bandwidth(eta: f64, input_dim: usize, dimension: usize, seed: u64) -> Result<Self> {
        Self::new(input_dim, dimension, 1.0 / (2.0 * eta).sqrt(), seed)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    fn projection(&self, k: usize, x: &[f64]) -> f64 {
        let row = &self.frequencies[k * self.input_dim..(k + 1) * self.input_dim];
        row.iter().zip(x).map(|(w, v)| w * v).sum()
    }

    /// Writes `z(x)` into `out` (length `D`): cosines first, then sines.
    pub fn features_into(&self, x: &[f64], out: &mut [f64]) {
        let half = self.dimension / 2;
        let s = (2.0 / self.dimension as f64).sqrt();
        for k in 0..half {
            let (sin, cos) = self.projection(k, x).sin_cos();
            out[k] = s * cos;
            out[half + k] = s * sin;
        }
    }

    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return shape_err(format!("RFF map expects dimension {}, got {}", self.input_dim, x.len()));
        }
        let mut out = vec![0.0; self.dimension];
        self.features_into(x, &mut out);
        Ok(out)
    }

    /// Features for a batch of points, row-major `[n x D]`.
    pub fn features_batch(&self, xs: &[f64]) -> Result<Vec<f64>> {
        if xs.len() % self.input_dim != 0 {
            return shape_err("batch length is not a multiple of the input dimension");
        }
        let n = xs.len() / self.input_dim;
        let mut out = vec![0.0; n * self.dimension];
        for (x, o) in xs.chunks_exact(self.input_dim).zip(out.chunks_exact_mut(self.dimension)) {
            self.features_into(x, o);
        }
        Ok(out)
    }

    /// Accumulates `sum_k c[k] * d z_k(x) / d x` into `grad`.
    fn pullback(&self, x: &[f64], c: &[f64], scale: f64, grad: &mut [f64]) {
        let half = self.dimension / 2;
        let s = (2.0 / self.dimension as f64).sqrt() * scale;
        for k in 0..half {
            let (sin, cos) = self.projection(k, x).sin_cos();
            let coef = s * (-sin * c[k] + cos * c[half + k]);
            let row = &self.frequencies[k * self.input_dim..(k + 1) * self.input_dim];
            for (g, w) in grad.iter_mut().zip(row) {
                *g += coef * w;
            }
        }
    }
}

pub fn rff_features(x: &[f64], map: &RffMap) -> Result<Vec<f64>> {
    map.features(x)
}

/// One independent map per bandwidth, seeded from `seed` and the band index.
pub fn rff_maps_for(bands: &BandwidthSet, input_dim: usize, dimension: usize, seed: u64) -> Result<Vec<RffMap>> {
    bands
        .etas()
        .iter()
        .enumerate()
        .map(|(b, &eta)| RffMap::for_bandwidth(eta, input_dim, dimension, rng::derive(seed, &[b as u64])))
        .collect()
}

fn mean_features(map: &RffMap, pts: &[f64]) -> Vec<f64> {
    let mut mean = vec![0.0; map.dimension];
    let mut buf = vec![0.0; map.dimension];
    let n = pts.len() / map.input_dim;
    for x in pts.chunks_exact(map.input_dim) {
        map.features_into(x, &mut buf);
        for (a, b) in mean.iter_mut().zip(&buf) {
            *a += b;
        }
    }
    mean.iter_mut().for_each(|a| *a /= n as f64);
    mean
}

/// Linear-time MMD² from random features: `sum_b |mean_U z_b - mean_V z_b|^2`.
pub fn mmd2_linear(u: &[f64], v: &[f64], dim: usize, maps: &[RffMap]) -> Result<f64> {
    mmd2_linear_impl(u, v, dim, maps, false).map(|r| r.0)
}

pub fn mmd2_linear_with_grad(u: &[f64], v: &[f64], dim: usize, maps: &[RffMap]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    mmd2_linear_impl(u, v, dim, maps, true)
}

fn mmd2_linear_impl(u: &[f64], v: &[f64], dim: usize, maps: &[RffMap], want_grad: bool) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (m, n) = check_sets(u, v, dim, 1)?;
    if maps.is_empty() {
        return Err(Error::Config("linear MMD needs at least one feature map".into()));
    }
    if let Some(bad) = maps.iter().find(|mp| mp.input_dim != dim) {
        return shape_err(format!("feature map expects dimension {}, samples have {dim}", bad.input_dim));
    }
    let mut total = 0.0;
    let mut du = if want_grad { vec![0.0; u.len()] } else { Vec::new() };
    let mut dv = if want_grad { vec![0.0; v.len()] } else { Vec::new() };
    for map in maps {
        let mu = mean_features(map, u);
        let mv = mean_features(map, v);
        let diff: Vec<f64> = mu.iter().zip(&mv).map(|(a, b)| a - b).collect();
        total += diff.iter().map(|d| d * d).sum::<f64>();
        if want_grad {
            for (x, g) in u.chunks_exact(dim).zip(du.chunks_exact_mut(dim)) {
                map.pullback(x, &diff, 2.0 / m as f64, g);
            }
            for (x, g) in v.chunks_exact(dim).zip(dv.chunks_exact_mut(dim)) {
                map.pullback(x, &diff, -2.0 / n as f64, g);
            }
        }
    }
    Ok((total, du, dv))
}

/// Biased (V-statistic) MMD² including the diagonal terms; the quantity the
/// random-feature estimator approximates.
pub fn mmd2_biased(u: &[f64], v: &[f64], dim: usize, bands: &BandwidthSet) -> Result<f64> {
    let (m, n) = check_sets(u, v, dim, 1)?;
    let mean_k = |a: &[f64], na: usize, b: &[f64], nb: usize| -> f64 {
        let mut s = 0.0;
        for x in a.chunks_exact(dim) {
            for y in b.chunks_exact(dim) {
                let d2 = sq_dist(x, y);
                s += bands.etas().iter().map(|e| (-e * d2).exp()).sum::<f64>();
            }
        }
        s / (na * nb) as f64
    };
    Ok(mean_k(u, m, u, m) + mean_k(v, n, v, n) - 2.0 * mean_k(u, m, v, n))
}

/// Largest `x`-kernel cache (entries over all bands) kept by [`JointMmd`].
const KX_CACHE_LIMIT: usize = 200_000;

/// MMD² between generated points `(x_j, yhat_j)` and fixed data `(x_j, y_j)`.
///
/// Both sets share the `x` column, so `exp(-eta (dx^2 + dy^2))` factors into
/// a cached `x` part and a `y` part. The data-only within-set term is
/// constant and computed once.
#[derive(Debug, Clone)]
pub struct JointMmd {
    x: Vec<f64>,
    y: Vec<f64>,
    etas: Vec<f64>,
    /// Per band, the full `m x m` matrix `exp(-eta (x_i - x_j)^2)` when small.
    kx: Option<Vec<Vec<f64>>>,
    data_term: f64,
}

impl JointMmd {
    pub fn new(x: &[f64], y: &[f64], bands: &BandwidthSet) -> Result<Self> {
        if x.len() != y.len() {
            return shape_err("x and y lengths differ");
        }
        let m = x.len();
        if m < 2 {
            return Err(Error::Precondition("MMD needs at least 2 points".into()));
        }
        let etas = bands.etas().to_vec();
        let kx = (m * m * etas.len() <= KX_CACHE_LIMIT).then(|| {
            etas.iter()
                .map(|&eta| {
                    let mut k = vec![0.0; m * m];
                    for i in 0..m {
                        for j in 0..m {
                            let d = x[i] - x[j];
                            k[i * m + j] = (-eta * d * d).exp();
                        }
                    }
                    k
                })
                .collect()
        });
        let mut s = Self { x: x.to_vec(), y: y.to_vec(), etas, kx, data_term: 0.0 };
        s.data_term = s.within(y, None);
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    #[inline]
    fn kx(&self, b: usize, i: usize, j: usize) -> f64 {
        match &self.kx {
            Some(k) => k[b][i * self.x.len() + j],
            None => {
                let d = self.x[i] - self.x[j];
                (-self.etas[b] * d * d).exp()
            }
        }
    }

    /// Within-set term for the column `ys`, optionally accumulating its gradient.
    fn within(&self, ys: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let m = ys.len();
        let c = 2.0 / (m as f64 * (m as f64 - 1.0));
        let mut total = 0.0;
        for i in 0..m {
            for j in (i + 1)..m {
                let dy = ys[i] - ys[j];
                let dy2 = dy * dy;
                let mut k = 0.0;
                let mut dk = 0.0;
                for (b, &eta) in self.etas.iter().enumerate() {
                    let e = self.kx(b, i, j) * (-eta * dy2).exp();
                    k += e;
                    dk -= 2.0 * eta * e;
                }
                total += k;
                if let Some(g) = grad.as_deref_mut() {
                    let v = c * dk * dy;
                    g[i] += v;
                    g[j] -= v;
                }
            }
        }
        c * total
    }

    /// Returns the MMD² and its gradient with respect to `yhat`.
    pub fn evaluate(&self, yhat: &[f64], want_grad: bool) -> Result<(f64, Vec<f64>)> {
        let m = self.x.len();
        if yhat.len() != m {
            return shape_err(format!("generated column has {} points, data has {m}", yhat.len()));
        }
        let mut grad = vec![0.0; if want_grad { m } else { 0 }];
        let gen_term = self.within(yhat, want_grad.then_some(grad.as_mut_slice()));
        let c = 2.0 / (m * m) as f64;
        let mut cross = 0.0;
        for i in 0..m {
            let mut gi = 0.0;
            for j in 0..m {
                let dy = yhat[i] - self.y[j];
                let dy2 = dy * dy;
                let mut k = 0.0;
                let mut dk = 0.0;
                for (b, &eta) in self.etas.iter().enumerate() {
                    let e = self.kx(b, i, j) * (-eta * dy2).exp();
                    k += e;
                    dk -= 2.0 * eta * e;
                }
                cross += k;
                gi += dk * dy;
            }
            if want_grad {
                grad[i] -= c * gi;
            }
        }
        Ok((gen_term + self.data_term - c * cross, grad))
    }
}

/// Linear-time counterpart of [`JointMmd`] using one feature map per band.
#[derive(Debug, Clone)]
pub struct JointLinearMmd {
    x: Vec<f64>,
    maps: Vec<RffMap>,
    data_means: Vec<Vec<f64>>,
}

impl JointLinearMmd {
    pub fn new(x: &[f64], y: &[f64], maps: Vec<RffMap>) -> Result<Self> {
        if x.len() != y.len() || x.is_empty() {
            return shape_err("x and y must be non-empty with equal lengths");
        }
        if maps.iter().any(|m| m.input_dim() != 2) {
            return shape_err("joint feature maps must take 2-D points");
        }
        let joint: Vec<f64> = x.iter().zip(y).flat_map(|(&a, &b)| [a, b]).collect();
        let data_means = maps.iter().map(|mp| mean_features(mp, &joint)).collect();
        Ok(Self { x: x.to_vec(), maps, data_means })
    }

    pub fn evaluate(&self, yhat: &[f64], want_grad: bool) -> Result<(f64, Vec<f64>)> {
        let m = self.x.len();
        if yhat.len() != m {
            return shape_err(format!("generated column has {} points, data has {m}", yhat.len()));
        }
        let joint: Vec<f64> = self.x.iter().zip(yhat).flat_map(|(&a, &b)| [a, b]).collect();
        let mut total = 0.0;
        let mut grad = vec![0.0; if want_grad { m } else { 0 }];
        for (map, dm) in self.maps.iter().zip(&self.data_means) {
            let gm = mean_features(map, &joint);
            let diff: Vec<f64> = gm.iter().zip(dm).map(|(a, b)| a - b).collect();
            total += diff.iter().map(|d| d * d).sum::<f64>();
            if want_grad {
                for (i, p) in joint.chunks_exact(2).enumerate() {
                    let mut g2 = [0.0; 2];
                    map.pullback(p, &diff, 2.0 / m as f64, &mut g2);
                    grad[i] += g2[1];
                }
            }
        }
        Ok((total, grad))
    }
}

/// Loss target for one dataset: quadratic (default) or random-feature MMD.
#[derive(Debug, Clone)]
pub enum MmdTarget {
    Quadratic(JointMmd),
    Linear(JointLinearMmd),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MmdEstimator {
    #[default]
    Quadratic,
    Linear,
}

/// Random-feature dimension used by the linear estimator.
pub const LINEAR_MMD_FEATURES: usize = 100;

impl MmdTarget {
    pub fn new(x: &[f64], y: &[f64], bands: &BandwidthSet, estimator: MmdEstimator, seed: u64) -> Result<Self> {
        Ok(match estimator {
            MmdEstimator::Quadratic => MmdTarget::Quadratic(JointMmd::new(x, y, bands)?),
            MmdEstimator::Linear => {
                MmdTarget::Linear(JointLinearMmd::new(x, y, rff_maps_for(bands, 2, LINEAR_MMD_FEATURES, seed)?)?)
            }
        })
    }

    pub fn evaluate(&self, yhat: &[f64], want_grad: bool) -> Result<(f64, Vec<f64>)> {
        match self {
            MmdTarget::Quadratic(t) => t.evaluate(yhat, want_grad),
            MmdTarget::Linear(t) => t.evaluate(yhat, want_grad),
        }
    }
}
