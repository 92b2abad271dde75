//! The dataset-conditioned generative model.
//!
//! For every point `j` of a dataset with feature row `C`:
//!
//! ```text
//! (beta, gamma) = film(C)            shift and scale for the decoder hidden layer
//! (mu, s)       = amortizer(C)
//! w_j           = mu + softplus(s) * z_j,       z_j ~ N(0, 1) independent of x_j
//! h_j           = relu(beta + gamma * (W1 [x_j, w_j] + b1))
//! yhat_j        = W2 h_j + b2
//! ```
//!
//! With a DeepSets encoder `C` is one vector per dataset and the encoder is
//! trained through the loss; with conditional mean embeddings `C` is a fixed
//! per-point matrix.

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::data::PairDataset;
use crate::embeddings::{CmeConfig, DatasetFeature, DeepSetsEncoder, DEEPSETS_OUTPUT};
use crate::error::{shape_err, Error, Result};
use crate::kernels::MmdTarget;
use crate::nn::{self, affine_forward, mlp_init, relu, Mlp, MlpConfig, ParamTensor, Tape};
use crate::rng;

pub const FILM_HIDDEN: [usize; 2] = [40, 40];
pub const AMORTIZER_HIDDEN: [usize; 2] = [40, 20];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    #[default]
    DeepSets,
    Cme,
}

/// Architecture variant: the full model or one of the ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Full,
    /// FiLM bypassed (identity modulation), amortizer kept.
    NoFilm,
    /// Decoder only, fed `(x, z)`; no encoder, FiLM or amortizer.
    NaiveJoint,
}

/// `ln(1 + e^v)`, floored at the smallest positive double so it never reaches 0.
#[inline]
pub fn softplus(v: f64) -> f64 {
    (v.max(0.0) + (-v.abs()).exp().ln_1p()).max(f64::MIN_POSITIVE)
}

#[inline]
fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `beta + gamma * l`, elementwise.
pub fn film_modulate(beta: &[f64], gamma: &[f64], hidden: &[f64]) -> Result<Vec<f64>> {
    if beta.len() != hidden.len() || gamma.len() != hidden.len() {
        return shape_err(format!(
            "FiLM parameters of widths {} and {} for a layer of width {}",
            beta.len(),
            gamma.len(),
            hidden.len()
        ));
    }
    Ok(beta.iter().zip(gamma).zip(hidden).map(|((b, g), l)| b + g * l).collect())
}

/// Network emitting `(beta, gamma)` for the decoder hidden layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilmNet {
    pub net: Mlp,
}

impl FilmNet {
    /// The `gamma` half of the output bias starts at 1 so an untrained net
    /// modulates close to the identity.
    pub fn new(feature_dim: usize, decoder_hidden: usize, seed: u64) -> Result<Self> {
        let widths = [feature_dim, FILM_HIDDEN[0], FILM_HIDDEN[1], 2 * decoder_hidden];
        let mut net = Mlp::new(MlpConfig::relu_hidden(&widths, seed), "film")?;
        let last = net.params_mut().last_mut().expect("output bias");
        last.values[decoder_hidden..].iter_mut().for_each(|v| *v = 1.0);
        Ok(Self { net })
    }

    pub fn width(&self) -> usize {
        self.net.output_dim() / 2
    }

    /// `(beta, gamma)` for one feature vector.
    pub fn params_for(&self, feature: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let out = self.net.predict(feature, 1)?;
        let h = self.width();
        Ok((out[..h].to_vec(), out[h..].to_vec()))
    }

    pub fn modulate(&self, feature: &[f64], hidden: &[f64]) -> Result<Vec<f64>> {
        let (beta, gamma) = self.params_for(feature)?;
        film_modulate(&beta, &gamma, hidden)
    }
}

/// Network emitting the latent location and (pre-softplus) scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AmortizationNet {
    pub net: Mlp,
}

impl AmortizationNet {
    pub fn new(feature_dim: usize, seed: u64) -> Result<Self> {
        let widths = [feature_dim, AMORTIZER_HIDDEN[0], AMORTIZER_HIDDEN[1], 2];
        Ok(Self { net: Mlp::new(MlpConfig::relu_hidden(&widths, seed), "amortizer")? })
    }

    /// `(mu(C), sigma(C))` with `sigma = softplus(raw) > 0`.
    pub fn latent_params(&self, feature: &[f64]) -> Result<(f64, f64)> {
        let out = self.net.predict(feature, 1)?;
        Ok((out[0], softplus(out[1])))
    }

    pub fn amortize_latent(&self, feature: &[f64], z: f64) -> Result<f64> {
        let (mu, sigma) = self.latent_params(feature)?;
        Ok(mu + sigma * z)
    }
}

/// One-hidden-layer decoder mapping `(x, w)` to `yhat`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Decoder {
    /// `[w1 (h x 2), b1 (h), w2 (1 x h), b2 (1)]`
    pub params: Vec<ParamTensor>,
}

impl Decoder {
    pub fn new(hidden: usize, seed: u64) -> Result<Self> {
        Ok(Self { params: mlp_init(&MlpConfig::relu_hidden(&[2, hidden, 1], seed), "decoder")? })
    }

    pub fn hidden(&self) -> usize {
        self.params[1].len()
    }

    /// Unmodulated forward pass for one point.
    pub fn forward_plain(&self, x: f64, w: f64) -> f64 {
        let h = self.hidden();
        let pre = affine_forward(&self.params[0].values, &self.params[1].values, &[x, w], 1, 2, h);
        let act: Vec<f64> = pre.iter().map(|&v| relu(v)).collect();
        affine_forward(&self.params[2].values, &self.params[3].values, &act, 1, h, 1)[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub encoder_kind: EncoderKind,
    pub variant: Variant,
    pub decoder_hidden: usize,
    /// DeepSets output dimension (ignored for CME, whose feature has `cme.features` entries).
    pub feature_dim: usize,
    pub cme: CmeConfig,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            encoder_kind: EncoderKind::DeepSets,
            variant: Variant::Full,
            decoder_hidden: 40,
            feature_dim: DEEPSETS_OUTPUT,
            cme: CmeConfig::default(),
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn conditioning_dim(&self) -> usize {
        match self.encoder_kind {
            EncoderKind::DeepSets => self.feature_dim,
            EncoderKind::Cme => self.cme.features,
        }
    }
}

/// All trainable parameters of the generator.
#[derive(Debug, Clone)]
pub struct GeneratorModel {
    pub config: GeneratorConfig,
    pub encoder: Option<DeepSetsEncoder>,
    pub film: FilmNet,
    pub amortizer: AmortizationNet,
    pub decoder: Decoder,
}

/// Everything recorded by [`GeneratorModel::forward`] for the backward pass.
#[derive(Debug)]
pub struct GenTape {
    encoder: Option<Tape>,
    film: Option<Tape>,
    amortizer: Option<Tape>,
    film_out: Vec<f64>,
    amort_out: Vec<f64>,
    /// `0` when one feature row serves every point.
    feature_stride: usize,
    z: Vec<f64>,
    dec_in: Vec<f64>,
    pre: Vec<f64>,
    modulated: Vec<f64>,
}

impl GeneratorModel {
    pub fn new(config: GeneratorConfig) -> Result<Self> {
        if config.decoder_hidden == 0 || config.feature_dim == 0 {
            return Err(Error::Config("decoder width and feature dimension must be positive".into()));
        }
        let seed = config.seed;
        let c = config.conditioning_dim();
        let encoder = match config.encoder_kind {
            EncoderKind::DeepSets => Some(DeepSetsEncoder::new(config.feature_dim, rng::derive(seed, &[10]))?),
            EncoderKind::Cme => None,
        };
        Ok(Self {
            config,
            encoder,
            film: FilmNet::new(c, config.decoder_hidden, rng::derive(seed, &[11]))?,
            amortizer: AmortizationNet::new(c, rng::derive(seed, &[12]))?,
            decoder: Decoder::new(config.decoder_hidden, rng::derive(seed, &[13]))?,
        })
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    fn uses_feature(&self) -> bool {
        self.config.variant != Variant::NaiveJoint
    }

    /// Dataset feature as seen by this model.
    pub fn feature(&self, d: &PairDataset) -> Result<DatasetFeature> {
        match self.config.encoder_kind {
            EncoderKind::DeepSets => {
                let enc = self.encoder.as_ref().ok_or_else(|| Error::Config("DeepSets model without encoder".into()))?;
                Ok(DatasetFeature::Global(enc.embed(d)?))
            }
            EncoderKind::Cme => self.config.cme.per_point_feature(d),
        }
    }

    /// Fixed features that can be computed once per dataset (CME only).
    pub fn cached_feature(&self, d: &PairDataset) -> Result<Option<DatasetFeature>> {
        match (self.config.encoder_kind, self.uses_feature()) {
            (EncoderKind::Cme, true) => Ok(Some(self.config.cme.per_point_feature(d)?)),
            _ => Ok(None),
        }
    }

    fn check_feature(&self, f: &DatasetFeature, m: usize) -> Result<()> {
        let ok_kind = matches!(
            (self.config.encoder_kind, f),
            (EncoderKind::DeepSets, DatasetFeature::Global(_)) | (EncoderKind::Cme, DatasetFeature::PerPoint { .. })
        );
        if !ok_kind {
            return Err(Error::Config(format!(
                "feature kind does not match encoder {:?}",
                self.config.encoder_kind
            )));
        }
        if f.dim() != self.config.conditioning_dim() {
            return shape_err(format!("feature dim {} != {}", f.dim(), self.config.conditioning_dim()));
        }
        if let DatasetFeature::PerPoint { .. } = f {
            if f.rows() != m {
                return shape_err(format!("{} feature rows for {m} points", f.rows()));
            }
        }
        Ok(())
    }

    /// Generates `yhat` for the dataset's `x` column with noise `z`.
    ///
    /// `feature` overrides the model's own feature computation; with a
    /// DeepSets encoder it must be `None` during training so the encoder
    /// receives gradients.
    pub fn forward(&self, d: &PairDataset, feature: Option<&DatasetFeature>, z: &[f64]) -> Result<(Vec<f64>, GenTape)> {
        let m = d.len();
        if z.len() != m {
            return shape_err(format!("{} noise draws for {m} points", z.len()));
        }
        let h = self.decoder.hidden();
        let mut enc_tape = None;
        let mut film_tape = None;
        let mut amort_tape = None;
        let mut film_out = Vec::new();
        let mut amort_out = Vec::new();
        let mut feature_stride = 0;

        if self.uses_feature() {
            let owned;
            let feat: &DatasetFeature = match (feature, self.config.encoder_kind) {
                (Some(f), _) => f,
                (None, EncoderKind::DeepSets) => {
                    let enc = self.encoder.as_ref().ok_or_else(|| Error::Config("DeepSets model without encoder".into()))?;
                    let (c, tape) = enc.embed_with_tape(d)?;
                    enc_tape = Some(tape);
                    owned = DatasetFeature::Global(c);
                    &owned
                }
                (None, EncoderKind::Cme) => {
                    owned = self.config.cme.per_point_feature(d)?;
                    &owned
                }
            };
            self.check_feature(feat, m)?;
            let rows = feat.rows();
            feature_stride = usize::from(rows > 1);
            if self.config.variant == Variant::Full {
                let (out, t) = self.film.net.forward(feat.data(), rows)?;
                film_out = out;
                film_tape = Some(t);
            }
            let (out, t) = self.amortizer.net.forward(feat.data(), rows)?;
            amort_out = out;
            amort_tape = Some(t);
        }

        let p = &self.decoder.params;
        let mut dec_in = Vec::with_capacity(2 * m);
        let mut pre = Vec::with_capacity(h * m);
        let mut modulated = Vec::with_capacity(h * m);
        let mut yhat = Vec::with_capacity(m);
        for j in 0..m {
            let r = j * feature_stride;
            let w = if self.uses_feature() {
                amort_out[2 * r] + softplus(amort_out[2 * r + 1]) * z[j]
            } else {
                z[j]
            };
            dec_in.extend([d.x[j], w]);
            let mut out = p[3].values[0];
            for k in 0..h {
                let l = p[0].values[2 * k] * d.x[j] + p[0].values[2 * k + 1] * w + p[1].values[k];
                let md = if film_out.is_empty() {
                    l
                } else {
                    film_out[2 * h * r + k] + film_out[2 * h * r + h + k] * l
                };
                pre.push(l);
                modulated.push(md);
                out += p[2].values[k] * relu(md);
            }
            yhat.push(out);
        }
        let tape = GenTape {
            encoder: enc_tape,
            film: film_tape,
            amortizer: amort_tape,
            film_out,
            amort_out,
            feature_stride,
            z: z.to_vec(),
            dec_in,
            pre,
            modulated,
        };
        Ok((yhat, tape))
    }

    /// Backpropagates `d loss / d yhat` into every active parameter.
    pub fn backward(&mut self, tape: GenTape, dyhat: &[f64]) -> Result<()> {
        let m = tape.z.len();
        if dyhat.len() != m {
            return shape_err("cotangent length does not match generated sample");
        }
        let h = self.decoder.hidden();
        let rows = if tape.feature_stride == 0 { 1 } else { m };
        let mut d_film = vec![0.0; if tape.film_out.is_empty() { 0 } else { rows * 2 * h }];
        let mut d_amort = vec![0.0; if tape.amort_out.is_empty() { 0 } else { rows * 2 }];
        {
            let (w1p, rest) = self.decoder.params.split_at_mut(1);
            let (b1p, rest) = rest.split_at_mut(1);
            let (w2p, b2p) = rest.split_at_mut(1);
            let (w1, b1, w2, b2) = (&mut w1p[0], &mut b1p[0], &mut w2p[0], &mut b2p[0]);
            for j in 0..m {
                let g = dyhat[j];
                if g == 0.0 {
                    continue;
                }
                let r = j * tape.feature_stride;
                b2.grad[0] += g;
                let (x, w) = (tape.dec_in[2 * j], tape.dec_in[2 * j + 1]);
                let mut dw = 0.0;
                for k in 0..h {
                    let md = tape.modulated[j * h + k];
                    w2.grad[k] += g * relu(md);
                    if md <= 0.0 {
                        continue;
                    }
                    let dmod = g * w2.values[k];
                    let l = tape.pre[j * h + k];
                    let dpre = if d_film.is_empty() {
                        dmod
                    } else {
                        d_film[2 * h * r + k] += dmod;
                        d_film[2 * h * r + h + k] += dmod * l;
                        dmod * tape.film_out[2 * h * r + h + k]
                    };
                    w1.grad[2 * k] += dpre * x;
                    w1.grad[2 * k + 1] += dpre * w;
                    b1.grad[k] += dpre;
                    dw += dpre * w1.values[2 * k + 1];
                }
                if !d_amort.is_empty() {
                    d_amort[2 * r] += dw;
                    d_amort[2 * r + 1] += dw * tape.z[j] * sigmoid(tape.amort_out[2 * r + 1]);
                }
            }
        }

        let need_feature_grad = tape.encoder.is_some();
        let mut d_feature: Option<Vec<f64>> = None;
        let mut add = |g: Vec<f64>| match d_feature.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => d_feature = Some(g),
        };
        if let Some(t) = tape.film {
            if need_feature_grad {
                add(self.film.net.backward(t, &d_film)?);
            } else {
                self.film.net.backward_params(t, &d_film)?;
            }
        }
        if let Some(t) = tape.amortizer {
            if need_feature_grad {
                add(self.amortizer.net.backward(t, &d_amort)?);
            } else {
                self.amortizer.net.backward_params(t, &d_amort)?;
            }
        }
        if let (Some(t), Some(df)) = (tape.encoder, d_feature) {
            self.encoder.as_mut().expect("encoder tape implies encoder").backward(t, &df)?;
        }
        Ok(())
    }

    /// Noise draws used for a dataset of `m` points under `noise_seed`.
    pub fn noise(m: usize, noise_seed: u64) -> Vec<f64> {
        rng::normals(rng::derive(noise_seed, &[rng::STREAM_NOISE]), m)
    }

    /// Samples `yhat` for every `x_j` of `d`; deterministic per `noise_seed`.
    pub fn generate(&self, d: &PairDataset, noise_seed: u64) -> Result<Vec<f64>> {
        self.generate_with_feature(d, None, noise_seed)
    }

    pub fn generate_with_feature(&self, d: &PairDataset, feature: Option<&DatasetFeature>, noise_seed: u64) -> Result<Vec<f64>> {
        if d.is_empty() {
            return Err(Error::Precondition(format!("{}: cannot generate for an empty dataset", d.name)));
        }
        let z = Self::noise(d.len(), noise_seed);
        Ok(self.forward(d, feature, &z)?.0)
    }

    /// MMD² loss of one dataset; accumulates gradients when `train` is set.
    pub fn loss_step(
        &mut self,
        d: &PairDataset,
        feature: Option<&DatasetFeature>,
        target: &MmdTarget,
        z: &[f64],
        train: bool,
    ) -> Result<f64> {
        let (yhat, tape) = self.forward(d, feature, z)?;
        let (loss, grad) = target.evaluate(&yhat, train)?;
        if train {
            self.backward(tape, &grad)?;
        }
        Ok(loss)
    }

    /// Parameters updated by training, in a fixed order.
    pub fn trainable_params(&self) -> Vec<&ParamTensor> {
        let mut out: Vec<&ParamTensor> = Vec::new();
        let v = self.config.variant;
        if v != Variant::NaiveJoint {
            if let Some(e) = &self.encoder {
                out.extend(e.net.params());
            }
            if v == Variant::Full {
                out.extend(self.film.net.params());
            }
            out.extend(self.amortizer.net.params());
        }
        out.extend(&self.decoder.params);
        out
    }

    pub fn trainable_params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let v = self.config.variant;
        let mut out: Vec<&mut ParamTensor> = Vec::new();
        if v != Variant::NaiveJoint {
            if let Some(e) = &mut self.encoder {
                out.extend(e.net.params_mut().iter_mut());
            }
            if v == Variant::Full {
                out.extend(self.film.net.params_mut().iter_mut());
            }
            out.extend(self.amortizer.net.params_mut().iter_mut());
        }
        out.extend(self.decoder.params.iter_mut());
        out
    }

    /// Every parameter tensor, including inactive ones, for checkpoints.
    pub fn all_params(&self) -> Vec<&ParamTensor> {
        let mut out: Vec<&ParamTensor> = Vec::new();
        if let Some(e) = &self.encoder {
            out.extend(e.net.params());
        }
        out.extend(self.film.net.params());
        out.extend(self.amortizer.net.params());
        out.extend(&self.decoder.params);
        out
    }

    fn all_params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut out: Vec<&mut ParamTensor> = Vec::new();
        if let Some(e) = &mut self.encoder {
            out.extend(e.net.params_mut().iter_mut());
        }
        out.extend(self.film.net.params_mut().iter_mut());
        out.extend(self.amortizer.net.params_mut().iter_mut());
        out.extend(self.decoder.params.iter_mut());
        out
    }

    pub fn zero_grad(&mut self) {
        nn::zero_grads(self.all_params_mut());
    }

    pub fn all_finite(&self) -> bool {
        self.all_params().iter().all(|p| p.values.iter().all(|v| v.is_finite()))
    }

    /// FNV-1a digest of every parameter's bit pattern.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in self.all_params() {
            for v in &p.values {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }

    pub fn to_checkpoint(&self, epoch: usize, extra: serde_json::Value) -> Result<Checkpoint> {
        let metadata = serde_json::json!({
            "generator": self.config,
            "seed": self.config.seed,
            "config_hash": format!("{:016x}", config_hash(&self.config)?),
            "epoch": epoch,
            "encoder_kind": self.config.encoder_kind,
            "rff_seed": self.config.cme.seed,
            "extra": extra,
        });
        Ok(Checkpoint { metadata, tensors: self.all_params().into_iter().cloned().collect() })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config: GeneratorConfig = serde_json::from_value(
            ck.metadata.get("generator").cloned().ok_or_else(|| Error::Checkpoint("missing generator config".into()))?,
        )?;
        let mut model = Self::new(config)?;
        let mut targets = model.all_params_mut();
        if targets.len() != ck.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                targets.len(),
                ck.tensors.len()
            )));
        }
        for (t, s) in targets.iter_mut().zip(&ck.tensors) {
            if t.name != s.name || t.shape != s.shape {
                return Err(Error::Checkpoint(format!(
                    "tensor {} {:?} does not match {} {:?}",
                    s.name, s.shape, t.name, t.shape
                )));
            }
            t.values.copy_from_slice(&s.values);
        }
        Ok(model)
    }
}

fn config_hash(c: &GeneratorConfig) -> Result<u64> {
    let s = serde_json::to_string(c)?;
    Ok(s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)))
}
