//! Dataset features: conditional mean embeddings from random Fourier
//! features, and the DeepSets mean-pooled encoder.
//!
//! The conditional mean embedding operator is the vector-valued ridge
//! regression of `phi_y(y)` on `phi_x(x)`. The primal form solves a `D x D`
//! system (cost `O(D^3 + D^2 n)`); the dual form solves `n x n` and is kept
//! as an independent check.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::PairDataset;
use crate::error::{shape_err, Error, Result};
use crate::kernels::RffMap;
use crate::nn::{Mlp, MlpConfig, Tape};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmeConfig {
    pub features: usize,
    pub lengthscale: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for CmeConfig {
    fn default() -> Self {
        Self { features: 100, lengthscale: 1.0, lambda: 1.0, seed: 0 }
    }
}

impl CmeConfig {
    /// The `(phi_x, phi_y)` feature maps, each seeded from `seed`.
    pub fn maps(&self) -> Result<(RffMap, RffMap)> {
        Ok((
            RffMap::new(1, self.features, self.lengthscale, rng::derive(self.seed, &[0]))?,
            RffMap::new(1, self.features, self.lengthscale, rng::derive(self.seed, &[1]))?,
        ))
    }

    /// Fits the operator on `d` and embeds every `x_j`.
    pub fn per_point_feature(&self, d: &PairDataset) -> Result<DatasetFeature> {
        let (fx, fy) = self.maps()?;
        let op = fit_cmeo(d, &fx, &fy, self.lambda)?;
        op.embed_all(&d.x)
    }
}

#[derive(Debug, Clone)]
enum CmeForm {
    /// `W = Phi_y Phi_x^T (Phi_x Phi_x^T + lambda I)^-1`, row-major `[D_y x D_x]`.
    Primal { weight: Vec<f64> },
    Dual { chol: nalgebra::Cholesky<f64, nalgebra::Dyn>, phi_x: DMatrix<f64>, phi_y: DMatrix<f64> },
}

/// Fitted estimate of the conditional mean embedding operator.
#[derive(Debug, Clone)]
pub struct CmeOperator {
    form: CmeForm,
    rff_x: RffMap,
    rff_y: RffMap,
    lambda: f64,
}

fn feature_matrix(map: &RffMap, values: &[f64]) -> DMatrix<f64> {
    // Columns are feature vectors.
    let d = map.dimension();
    let mut m = DMatrix::zeros(d, values.len());
    let mut buf = vec![0.0; d];
    for (j, &v) in values.iter().enumerate() {
        map.features_into(&[v], &mut buf);
        m.column_mut(j).copy_from_slice(&buf);
    }
    m
}

fn check_fit_inputs(d: &PairDataset, rff_x: &RffMap, rff_y: &RffMap, lambda: f64) -> Result<()> {
    if d.len() < 2 {
        return Err(Error::Precondition(format!("{}: CME needs at least 2 points", d.name)));
    }
    if !(lambda > 0.0) {
        return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
    }
    if rff_x.input_dim() != 1 || rff_y.input_dim() != 1 {
        return shape_err("CME feature maps must take scalar inputs");
    }
    Ok(())
}

/// Primal (Woodbury) fit.
pub fn fit_cmeo(d: &PairDataset, rff_x: &RffMap, rff_y: &RffMap, lambda: f64) -> Result<CmeOperator> {
    check_fit_inputs(d, rff_x, rff_y, lambda)?;
    let phi_x = feature_matrix(rff_x, &d.x);
    let phi_y = feature_matrix(rff_y, &d.y);
    let dx = rff_x.dimension();
    let a = &phi_x * phi_x.transpose() + DMatrix::identity(dx, dx) * lambda;
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Numeric(format!("{}: regularized feature covariance is not positive definite", d.name)))?;
    // W^T = A^-1 Phi_x Phi_y^T, since A is symmetric.
    let wt = chol.solve(&(&phi_x * phi_y.transpose()));
    let w = wt.transpose();
    let dy = rff_y.dimension();
    let mut weight = Vec::with_capacity(dy * dx);
    for r in 0..dy {
        weight.extend(w.row(r).iter().copied());
    }
    Ok(CmeOperator { form: CmeForm::Primal { weight }, rff_x: rff_x.clone(), rff_y: rff_y.clone(), lambda })
}

/// Dual fit: `embed(x) = Phi_y (K + lambda I)^-1 K_{:x}`.
pub fn fit_cmeo_dual(d: &PairDataset, rff_x: &RffMap, rff_y: &RffMap, lambda: f64) -> Result<CmeOperator> {
    check_fit_inputs(d, rff_x, rff_y, lambda)?;
    let phi_x = feature_matrix(rff_x, &d.x);
    let phi_y = feature_matrix(rff_y, &d.y);
    let n = d.len();
    let k = phi_x.transpose() * &phi_x + DMatrix::identity(n, n) * lambda;
    let chol = k
        .cholesky()
        .ok_or_else(|| Error::Numeric(format!("{}: regularized Gram matrix is not positive definite", d.name)))?;
    Ok(CmeOperator { form: CmeForm::Dual { chol, phi_x, phi_y }, rff_x: rff_x.clone(), rff_y: rff_y.clone(), lambda })
}

impl CmeOperator {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn output_dim(&self) -> usize {
        self.rff_y.dimension()
    }

    pub fn is_primal(&self) -> bool {
        matches!(self.form, CmeForm::Primal { .. })
    }

    /// Dual weights `beta(x)`; only available for the dual form.
    pub fn dual_weights(&self, x: f64) -> Option<Vec<f64>> {
        match &self.form {
            CmeForm::Dual { chol, phi_x, .. } => {
                let z = DVector::from_vec(self.rff_x.features(&[x]).ok()?);
                Some(chol.solve(&(phi_x.transpose() * z)).iter().copied().collect())
            }
            CmeForm::Primal { .. } => None,
        }
    }

    pub fn embed_into(&self, x: f64, zx: &mut [f64], out: &mut [f64]) {
        self.rff_x.features_into(&[x], zx);
        match &self.form {
            CmeForm::Primal { weight } => {
                let dx = self.rff_x.dimension();
                for (o, row) in out.iter_mut().zip(weight.chunks_exact(dx)) {
                    *o = row.iter().zip(zx.iter()).map(|(a, b)| a * b).sum();
                }
            }
            CmeForm::Dual { chol, phi_x, phi_y } => {
                let z = DVector::from_column_slice(zx);
                let beta = chol.solve(&(phi_x.transpose() * z));
                let e = phi_y * beta;
                out.copy_from_slice(e.as_slice());
            }
        }
    }

    /// Embedding `C_{Y|X} phi_x(x)`.
    pub fn embed(&self, x: f64) -> Vec<f64> {
        let mut zx = vec![0.0; self.rff_x.dimension()];
        let mut out = vec![0.0; self.output_dim()];
        self.embed_into(x, &mut zx, &mut out);
        out
    }

    pub fn embed_all(&self, xs: &[f64]) -> Result<DatasetFeature> {
        let dim = self.output_dim();
        let mut zx = vec![0.0; self.rff_x.dimension()];
        let mut data = vec![0.0; xs.len() * dim];
        for (&x, out) in xs.iter().zip(data.chunks_exact_mut(dim)) {
            self.embed_into(x, &mut zx, out);
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite conditional mean embedding".into()));
        }
        Ok(DatasetFeature::PerPoint { dim, data })
    }
}

pub fn cme_embed(op: &CmeOperator, x: f64) -> Vec<f64> {
    op.embed(x)
}

/// Distributional summary of a dataset fed to the conditioning networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DatasetFeature {
    /// One vector for the whole dataset (DeepSets).
    Global(Vec<f64>),
    /// One row per point, row-major `[m x dim]` (CME).
    PerPoint { dim: usize, data: Vec<f64> },
}

impl DatasetFeature {
    pub fn dim(&self) -> usize {
        match self {
            DatasetFeature::Global(v) => v.len(),
            DatasetFeature::PerPoint { dim, .. } => *dim,
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            DatasetFeature::Global(_) => 1,
            DatasetFeature::PerPoint { dim, data } => data.len() / dim,
        }
    }

    pub fn data(&self) -> &[f64] {
        match self {
            DatasetFeature::Global(v) => v,
            DatasetFeature::PerPoint { data, .. } => data,
        }
    }
}

/// Hidden widths of the DeepSets point network.
pub const DEEPSETS_HIDDEN: [usize; 2] = [40, 10];
/// Output dimension of the DeepSets feature.
pub const DEEPSETS_OUTPUT: usize = 10;

/// Mean-pooled point network over concatenated `(x_j, y_j)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeepSetsEncoder {
    pub net: Mlp,
}

impl DeepSetsEncoder {
    pub fn new(output_dim: usize, seed: u64) -> Result<Self> {
        let widths = [2, DEEPSETS_HIDDEN[0], DEEPSETS_HIDDEN[1], output_dim];
        Ok(Self { net: Mlp::new(MlpConfig::relu_hidden(&widths, seed), "encoder")? })
    }

    pub fn from_net(net: Mlp) -> Result<Self> {
        if net.input_dim() != 2 {
            return shape_err(format!("DeepSets point network must take 2 inputs, got {}", net.input_dim()));
        }
        Ok(Self { net })
    }

    pub fn output_dim(&self) -> usize {
        self.net.output_dim()
    }

    fn check(d: &PairDataset) -> Result<()> {
        if d.is_empty() {
            return Err(Error::Precondition(format!("{}: cannot embed an empty dataset", d.name)));
        }
        Ok(())
    }

    pub fn embed(&self, d: &PairDataset) -> Result<Vec<f64>> {
        Self::check(d)?;
        let out = self.net.predict(&d.joint(), d.len())?;
        Ok(mean_rows(&out, self.output_dim()))
    }

    /// Embedding plus the point-network tape for backpropagation.
    pub fn embed_with_tape(&self, d: &PairDataset) -> Result<(Vec<f64>, Tape)> {
        Self::check(d)?;
        let (out, tape) = self.net.forward(&d.joint(), d.len())?;
        Ok((mean_rows(&out, self.output_dim()), tape))
    }

    /// Backpropagates `dC` through the mean into the point network.
    pub fn backward(&mut self, tape: Tape, d_feature: &[f64]) -> Result<()> {
        let m = tape.batch();
        let scaled: Vec<f64> = d_feature.iter().map(|g| g / m as f64).collect();
        let cot: Vec<f64> = (0..m).flat_map(|_| scaled.iter().copied()).collect();
        self.net.backward_params(tape, &cot)
    }
}

fn mean_rows(out: &[f64], dim: usize) -> Vec<f64> {
    let n = out.len() / dim;
    let mut mean = vec![0.0; dim];
    for row in out.chunks_exact(dim) {
        for (a, b) in mean.iter_mut().zip(row) {
            *a += b;
        }
    }
    mean.iter_mut().for_each(|a| *a /= n as f64);
    mean
}

pub fn deepsets_embed(encoder: &DeepSetsEncoder, d: &PairDataset) -> Result<Vec<f64>> {
    encoder.embed(d)
}
