//! Dense-network substrate: parameter tensors, ReLU MLPs with a recorded
//! tape for reverse-mode gradients, Adam, and a central-difference checker.
//!
//! Layout conventions:
//! - weights are row-major with shape `[out, in]`, biases have shape `[out]`;
//! - batched activations are flat row-major buffers of shape `[n, width]`;
//! - gradients accumulate into [`ParamTensor::grad`] until [`zero_grads`].

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => relu(v),
            Activation::Identity => v,
        }
    }

    /// Derivative at `pre`; the ReLU subgradient at exactly 0 is 0.
    #[inline]
    fn slope(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
pub fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    /// Widths from input to output; at least two entries.
    pub layer_widths: Vec<usize>,
    /// One activation per affine layer (`layer_widths.len() - 1` entries).
    pub activations: Vec<Activation>,
    pub init_seed: u64,
}

impl MlpConfig {
    /// ReLU on every hidden layer, identity on the output layer.
    pub fn relu_hidden(layer_widths: &[usize], init_seed: u64) -> Self {
        let n = layer_widths.len().saturating_sub(1);
        let mut activations = vec![Activation::Relu; n];
        if let Some(last) = activations.last_mut() {
            *last = Activation::Identity;
        }
        Self { layer_widths: layer_widths.to_vec(), activations, init_seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::Config("an MLP needs at least input and output widths".into()));
        }
        if self.layer_widths.iter().any(|&w| w == 0) {
            return Err(Error::Config(format!("zero-width layer in {:?}", self.layer_widths)));
        }
        if self.activations.len() != self.layer_widths.len() - 1 {
            return Err(Error::Config(format!(
                "{} activations for {} layers",
                self.activations.len(),
                self.layer_widths.len() - 1
            )));
        }
        if self.activations.last() != Some(&Activation::Identity) {
            return Err(Error::Config("output layer activation must be identity".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }
}

/// A named parameter array with its accumulated gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    #[serde(skip)]
    pub grad: Vec<f64>,
}

impl ParamTensor {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { name: name.into(), shape, values: vec![0.0; n], grad: vec![0.0; n] }
    }

    pub fn from_values(name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != values.len() {
            return shape_err(format!("shape {shape:?} holds {n} values, got {}", values.len()));
        }
        Ok(Self { name: name.into(), shape, grad: vec![0.0; n], values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn zero_grads<'a>(params: impl IntoIterator<Item = &'a mut ParamTensor>) {
    for p in params {
        p.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Draws weights uniformly in `±sqrt(6 / (fan_in + fan_out))`; biases are zero.
pub fn mlp_init(config: &MlpConfig, prefix: &str) -> Result<Vec<ParamTensor>> {
    config.validate()?;
    let mut r = rng::rng(rng::derive(config.init_seed, &[rng::STREAM_INIT]));
    let mut params = Vec::with_capacity(2 * config.activations.len());
    for (l, pair) in config.layer_widths.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let values = (0..fan_in * fan_out).map(|_| r.gen_range(-bound..bound)).collect();
        params.push(ParamTensor::from_values(format!("{prefix}.w{l}"), vec![fan_out, fan_in], values)?);
        params.push(ParamTensor::zeros(format!("{prefix}.b{l}"), vec![fan_out]));
    }
    Ok(params)
}

/// `out[r, :] = W in[r, :] + b` for every row of the batch.
pub(crate) fn affine_forward(w: &[f64], b: &[f64], input: &[f64], n: usize, d_in: usize, d_out: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * d_out);
    for row in input.chunks_exact(d_in).take(n) {
        for o in 0..d_out {
            let wr = &w[o * d_in..(o + 1) * d_in];
            let s: f64 = wr.iter().zip(row).map(|(a, b)| a * b).sum();
            out.push(s + b[o]);
        }
    }
    out
}

/// Accumulates `dW`, `db` and returns `d input` for an affine layer.
pub(crate) fn affine_backward(
    w: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    input: &[f64],
    dout: &[f64],
    d_in: usize,
    d_out: usize,
    need_input_grad: bool,
) -> Vec<f64> {
    let n = dout.len() / d_out;
    let mut din = if need_input_grad { vec![0.0; n * d_in] } else { Vec::new() };
    for r in 0..n {
        let row = &input[r * d_in..(r + 1) * d_in];
        let g = &dout[r * d_out..(r + 1) * d_out];
        for o in 0..d_out {
            let go = g[o];
            if go == 0.0 {
                continue;
            }
            db[o] += go;
            let dwr = &mut dw[o * d_in..(o + 1) * d_in];
            for (a, x) in dwr.iter_mut().zip(row) {
                *a += go * x;
            }
            if need_input_grad {
                let wr = &w[o * d_in..(o + 1) * d_in];
                let dr = &mut din[r * d_in..(r + 1) * d_in];
                for (a, wv) in dr.iter_mut().zip(wr) {
                    *a += go * wv;
                }
            }
        }
    }
    din
}

static NEXT_MODEL_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_MODEL_ID.fetch_add(1, Ordering::Relaxed)
}

/// Record of one forward pass, consumed by [`Mlp::backward`].
#[derive(Debug)]
pub struct Tape {
    model_id: u64,
    generation: u64,
    batch: usize,
    /// Input to each affine layer.
    layer_inputs: Vec<Vec<f64>>,
    /// Pre-activation output of each affine layer.
    preacts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Mlp {
    config: MlpConfig,
    params: Vec<ParamTensor>,
    #[serde(skip, default = "fresh_id")]
    id: u64,
    #[serde(skip)]
    generation: u64,
}

impl Clone for Mlp {
    fn clone(&self) -> Self {
        Self { config: self.config.clone(), params: self.params.clone(), id: fresh_id(), generation: 0 }
    }
}

impl Mlp {
    pub fn new(config: MlpConfig, prefix: &str) -> Result<Self> {
        let params = mlp_init(&config, prefix)?;
        Ok(Self { config, params, id: fresh_id(), generation: 0 })
    }

    /// Rebuilds a network from stored tensors, checking shapes against `config`.
    pub fn from_params(config: MlpConfig, params: Vec<ParamTensor>) -> Result<Self> {
        config.validate()?;
        let n_layers = config.activations.len();
        if params.len() != 2 * n_layers {
            return shape_err(format!("expected {} tensors, got {}", 2 * n_layers, params.len()));
        }
        for (l, pair) in config.layer_widths.windows(2).enumerate() {
            if params[2 * l].shape != [pair[1], pair[0]] || params[2 * l + 1].shape != [pair[1]] {
                return shape_err(format!("layer {l} tensor shapes do not match widths {pair:?}"));
            }
        }
        let mut params = params;
        for p in &mut params {
            p.grad = vec![0.0; p.values.len()];
        }
        Ok(Self { config, params, id: fresh_id(), generation: 0 })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn params(&self) -> &[ParamTensor] {
        &self.params
    }

    /// Mutable access invalidates any outstanding tapes.
    pub fn params_mut(&mut self) -> &mut [ParamTensor] {
        self.generation += 1;
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    fn check_input(&self, input: &[f64], n: usize) -> Result<()> {
        let d = self.input_dim();
        if input.len() != n * d {
            return shape_err(format!("input holds {} values, expected {n} rows of width {d}", input.len()));
        }
        Ok(())
    }

    /// Forward pass over a batch of `n` rows, recording a tape.
    pub fn forward(&self, input: &[f64], n: usize) -> Result<(Vec<f64>, Tape)> {
        self.check_input(input, n)?;
        let widths = &self.config.layer_widths;
        let mut layer_inputs = Vec::with_capacity(self.config.activations.len());
        let mut preacts = Vec::with_capacity(self.config.activations.len());
        let mut cur = input.to_vec();
        for (l, act) in self.config.activations.iter().enumerate() {
            let pre = affine_forward(&self.params[2 * l].values, &self.params[2 * l + 1].values, &cur, n, widths[l], widths[l + 1]);
            let next: Vec<f64> = pre.iter().map(|&v| act.apply(v)).collect();
            layer_inputs.push(std::mem::replace(&mut cur, next));
            preacts.push(pre);
        }
        let tape = Tape { model_id: self.id, generation: self.generation, batch: n, layer_inputs, preacts };
        Ok((cur, tape))
    }

    /// Forward pass without recording.
    pub fn predict(&self, input: &[f64], n: usize) -> Result<Vec<f64>> {
        self.check_input(input, n)?;
        let widths = &self.config.layer_widths;
        let mut cur = input.to_vec();
        for (l, act) in self.config.activations.iter().enumerate() {
            let mut pre = affine_forward(&self.params[2 * l].values, &self.params[2 * l + 1].values, &cur, n, widths[l], widths[l + 1]);
            pre.iter_mut().for_each(|v| *v = act.apply(*v));
            cur = pre;
        }
        Ok(cur)
    }

    /// Accumulates `d(output . cotangent)/d params` into the parameter
    /// gradients and returns the gradient with respect to the input batch.
    pub fn backward(&mut self, tape: Tape, cotangent: &[f64]) -> Result<Vec<f64>> {
        self.backward_impl(tape, cotangent, true)
    }

    /// As [`Mlp::backward`] but skips the input gradient.
    pub fn backward_params(&mut self, tape: Tape, cotangent: &[f64]) -> Result<()> {
        self.backward_impl(tape, cotangent, false).map(|_| ())
    }

    fn backward_impl(&mut self, tape: Tape, cotangent: &[f64], need_input: bool) -> Result<Vec<f64>> {
        if tape.model_id != self.id || tape.generation != self.generation {
            return Err(Error::StaleTape { recorded: tape.generation, current: self.generation });
        }
        if cotangent.len() != tape.batch * self.output_dim() {
            return shape_err(format!(
                "cotangent holds {} values, expected {}",
                cotangent.len(),
                tape.batch * self.output_dim()
            ));
        }
        let widths = self.config.layer_widths.clone();
        let mut grad = cotangent.to_vec();
        for l in (0..self.config.activations.len()).rev() {
            let act = self.config.activations[l];
            for (g, &p) in grad.iter_mut().zip(&tape.preacts[l]) {
                *g *= act.slope(p);
            }
            let (w_part, b_part) = self.params.split_at_mut(2 * l + 1);
            let w = &mut w_part[2 * l];
            let b = &mut b_part[0];
            grad = affine_backward(
                &w.values,
                &mut w.grad,
                &mut b.grad,
                &tape.layer_inputs[l],
                &grad,
                widths[l],
                widths[l + 1],
                need_input || l > 0,
            );
        }
        Ok(grad)
    }

    pub fn zero_grad(&mut self) {
        zero_grads(self.params.iter_mut());
    }
}

/// Adam optimizer state with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step_count: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a ParamTensor>, lr: f64) -> Result<Self> {
        Self::with_constants(params, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_constants<'a>(
        params: impl IntoIterator<Item = &'a ParamTensor>,
        lr: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) -> Result<Self> {
        if !(lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        if !(0.0 < beta1 && beta1 < 1.0 && 0.0 < beta2 && beta2 < 1.0) {
            return Err(Error::Config(format!("Adam betas must lie in (0, 1), got {beta1}, {beta2}")));
        }
        let zeros: Vec<Vec<f64>> = params.into_iter().map(|p| vec![0.0; p.len()]).collect();
        Ok(Self {
            step_count: 0,
            second_moment: zeros.clone(),
            first_moment: zeros,
            lr,
            beta1,
            beta2,
            epsilon,
        })
    }

    /// Applies one update using each tensor's accumulated `grad`.
    ///
    /// A non-finite gradient aborts the step with nothing modified.
    pub fn step(&mut self, params: &mut [&mut ParamTensor]) -> Result<()> {
        if params.len() != self.first_moment.len() {
            return shape_err(format!("optimizer tracks {} tensors, got {}", self.first_moment.len(), params.len()));
        }
        for (p, m) in params.iter().zip(&self.first_moment) {
            if p.len() != m.len() || p.grad.len() != m.len() {
                return shape_err(format!("tensor {} does not match optimizer state", p.name));
            }
            if p.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient in {}", p.name)));
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first_moment).zip(&mut self.second_moment) {
            for i in 0..p.values.len() {
                let g = p.grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p.values[i] -= self.lr * mhat / (vhat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

pub fn flatten_values<'a>(params: impl IntoIterator<Item = &'a ParamTensor>) -> Vec<f64> {
    params.into_iter().flat_map(|p| p.values.iter().copied()).collect()
}

pub fn flatten_grads<'a>(params: impl IntoIterator<Item = &'a ParamTensor>) -> Vec<f64> {
    params.into_iter().flat_map(|p| p.grad.iter().copied()).collect()
}

/// Writes `flat` back into the tensors in order.
pub fn assign_values<'a>(params: impl IntoIterator<Item = &'a mut ParamTensor>, flat: &[f64]) -> Result<()> {
    let mut offset = 0;
    for p in params {
        let n = p.values.len();
        if offset + n > flat.len() {
            return shape_err("flat parameter vector too short");
        }
        p.values.copy_from_slice(&flat[offset..offset + n]);
        offset += n;
    }
    if offset != flat.len() {
        return shape_err("flat parameter vector too long");
    }
    Ok(())
}

/// Symmetric relative error used by the gradient checker.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + 1e-12)
}

/// Compares `analytic` against central differences of `loss` around `point`.
///
/// Returns the maximum [`relative_error`] over coordinates. `loss` must be a
/// deterministic function of its argument (freeze any noise beforehand).
pub fn finite_diff_check<F>(point: &[f64], analytic: &[f64], eps: f64, loss: F) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    finite_diff_check_steps(point, analytic, &[eps], loss)
}

/// Like [`finite_diff_check`], but each coordinate keeps its best agreement over
/// the given step sizes. Small steps avoid crossing ReLU kinks; larger steps
/// resolve tiny gradient entries that rounding noise swamps at small steps.
pub fn finite_diff_check_steps<F>(point: &[f64], analytic: &[f64], steps: &[f64], mut loss: F) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(point.len(), analytic.len(), "gradient length must match parameter length");
    assert!(!steps.is_empty(), "at least one step size is required");
    let mut probe = point.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..point.len() {
        let mut best = f64::INFINITY;
        for &eps in steps {
            probe[i] = point[i] + eps;
            let up = loss(&probe);
            probe[i] = point[i] - eps;
            let down = loss(&probe);
            probe[i] = point[i];
            best = best.min(relative_error(analytic[i], (up - down) / (2.0 * eps)));
        }
        worst = worst.max(best);
    }
    worst
}
