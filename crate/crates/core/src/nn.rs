//! A small neural-network engine: valid 1D convolution, dense layers, ReLU,
//! MSE loss, backpropagation and Adam. Everything runs in `f64`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Row-major `[channels × width]` activations.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(channels: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * width {
            return invalid(format!(
                "tensor data has {} values, shape {channels}x{width} needs {}",
                data.len(),
                channels * width
            ));
        }
        Ok(Self {
            channels,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, width: usize) -> Self {
        Self {
            channels,
            width,
            data: vec![0.0; channels * width],
        }
    }

    /// A flat vector viewed as one channel.
    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            channels: 1,
            width: data.len(),
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, c: usize) -> &[f64] {
        &self.data[c * self.width..(c + 1) * self.width]
    }

    fn same_shape(&self, other: &Tensor) -> bool {
        self.channels == other.channels && self.width == other.width
    }
}

/// Weights `[out × in × filter_len]`, stride 1, no padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1dLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub filter_len: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Weights `[n_out × n_in]`; the input tensor is flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv1dLayer {
    pub fn zeros(in_channels: usize, out_channels: usize, filter_len: usize) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || filter_len == 0 {
            return invalid("conv1d dimensions must be positive");
        }
        Ok(Self {
            in_channels,
            out_channels,
            filter_len,
            weights: vec![0.0; out_channels * in_channels * filter_len],
            bias: vec![0.0; out_channels],
        })
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.filter_len
    }

    pub fn output_width(&self, input_width: usize) -> Option<usize> {
        input_width.checked_sub(self.filter_len).map(|k| k + 1)
    }

    fn check_input(&self, input: &Tensor) -> Result<usize> {
        if input.channels != self.in_channels {
            return invalid(format!(
                "conv1d expects {} input channels, got {}",
                self.in_channels, input.channels
            ));
        }
        self.output_width(input.width).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "input width {} shorter than filter {}",
                input.width, self.filter_len
            ))
        })
    }

    #[inline]
    fn w(&self, o: usize, c: usize) -> &[f64] {
        let f = self.filter_len;
        let at = (o * self.in_channels + c) * f;
        &self.weights[at..at + f]
    }
}

/// out[o][k] = bias[o] + Σ_{c,f} w[o][c][f] · in[c][k+f]
pub fn conv1d_forward(layer: &Conv1dLayer, input: &Tensor) -> Result<Tensor> {
    let k_out = layer.check_input(input)?;
    let mut out = Tensor::zeros(layer.out_channels, k_out);
    for o in 0..layer.out_channels {
        let row = &mut out.data[o * k_out..(o + 1) * k_out];
        row.fill(layer.bias[o]);
        for c in 0..layer.in_channels {
            let w = layer.w(o, c);
            let x = input.row(c);
            for (k, acc) in row.iter_mut().enumerate() {
                *acc += w.iter().zip(&x[k..]).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
    Ok(out)
}

pub fn conv1d_backward(
    layer: &Conv1dLayer,
    input: &Tensor,
    grad_out: &Tensor,
) -> Result<(ParamGrads, Tensor)> {
    let k_out = layer.check_input(input)?;
    if grad_out.channels != layer.out_channels || grad_out.width != k_out {
        return invalid("conv1d upstream gradient has the wrong shape");
    }
    let f_len = layer.filter_len;
    let mut dw = vec![0.0; layer.weights.len()];
    let mut db = vec![0.0; layer.out_channels];
    let mut dx = Tensor::zeros(input.channels, input.width);
    for o in 0..layer.out_channels {
        let g = grad_out.row(o);
        db[o] = g.iter().sum();
        for c in 0..layer.in_channels {
            let x = input.row(c);
            let at = (o * layer.in_channels + c) * f_len;
            let w = &layer.weights[at..at + f_len];
            for f in 0..f_len {
                dw[at + f] = g.iter().zip(&x[f..]).map(|(a, b)| a * b).sum();
            }
            let dxr = &mut dx.data[c * input.width..(c + 1) * input.width];
            for (k, &gk) in g.iter().enumerate() {
                if gk != 0.0 {
                    for f in 0..f_len {
                        dxr[k + f] += gk * w[f];
                    }
                }
            }
        }
    }
    Ok((ParamGrads { weights: dw, bias: db }, dx))
}

impl DenseLayer {
    pub fn zeros(n_in: usize, n_out: usize) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return invalid("dense dimensions must be positive");
        }
        Ok(Self {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
        })
    }
}

/// Output is a `[n_out × 1]` tensor.
pub fn dense_forward(layer: &DenseLayer, input: &Tensor) -> Result<Tensor> {
    if input.len() != layer.n_in {
        return invalid(format!(
            "dense layer expects {} inputs, got {}",
            layer.n_in,
            input.len()
        ));
    }
    let data = (0..layer.n_out)
        .map(|o| {
            let w = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
            layer.bias[o] + w.iter().zip(&input.data).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect();
    Ok(Tensor {
        channels: layer.n_out,
        width: 1,
        data,
    })
}

pub fn dense_backward(
    layer: &DenseLayer,
    input: &Tensor,
    grad_out: &Tensor,
) -> Result<(ParamGrads, Tensor)> {
    if input.len() != layer.n_in || grad_out.len() != layer.n_out {
        return invalid("dense layer gradient shape mismatch");
    }
    let mut dw = vec![0.0; layer.weights.len()];
    let mut dx = vec![0.0; layer.n_in];
    for (o, &g) in grad_out.data.iter().enumerate() {
        let w = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
        let dwr = &mut dw[o * layer.n_in..(o + 1) * layer.n_in];
        for i in 0..layer.n_in {
            dwr[i] = g * input.data[i];
            dx[i] += g * w[i];
        }
    }
    let dx = Tensor {
        channels: input.channels,
        width: input.width,
        data: dx,
    };
    Ok((
        ParamGrads {
            weights: dw,
            bias: grad_out.data.clone(),
        },
        dx,
    ))
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    Tensor {
        channels: input.channels,
        width: input.width,
        data: input.data.iter().map(|&x| x.max(0.0)).collect(),
    }
}

pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if !input.same_shape(grad_out) {
        return invalid("relu gradient shape mismatch");
    }
    Ok(Tensor {
        channels: input.channels,
        width: input.width,
        data: input
            .data
            .iter()
            .zip(&grad_out.data)
            .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
            .collect(),
    })
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return invalid(format!(
            "mse needs equal non-empty lengths, got {} and {}",
            pred.len(),
            target.len()
        ));
    }
    let n = pred.len() as f64;
    let loss = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (t - p) * (t - p))
        .sum::<f64>()
        / n;
    let grad = pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect();
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv1d(Conv1dLayer),
    Dense(DenseLayer),
    Relu,
}

impl Layer {
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv1d(l) => conv1d_forward(l, input),
            Layer::Dense(l) => dense_forward(l, input),
            Layer::Relu => Ok(relu_forward(input)),
        }
    }

    /// Parameter gradients (empty for ReLU) and the input gradient.
    pub fn backward(&self, input: &Tensor, grad_out: &Tensor) -> Result<(Option<ParamGrads>, Tensor)> {
        match self {
            Layer::Conv1d(l) => conv1d_backward(l, input, grad_out).map(|(p, g)| (Some(p), g)),
            Layer::Dense(l) => dense_backward(l, input, grad_out).map(|(p, g)| (Some(p), g)),
            Layer::Relu => relu_backward(input, grad_out).map(|g| (None, g)),
        }
    }
}

/// Multiply and add counts actually executed by a forward pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpTally {
    pub muls: u64,
    pub adds: u64,
}

/// Layers applied in order. Parameters are enumerated layer by layer,
/// weights before bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

/// Per-layer gradients in the parameter order of [`Sequential`].
pub type Gradients = Vec<Vec<f64>>;

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    /// Forward pass keeping every layer input for [`Sequential::backward`].
    pub fn forward_cached(&self, input: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let mut cache = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let y = layer.forward(&x)?;
            cache.push(x);
            x = y;
        }
        Ok((x, cache))
    }

    /// Returns parameter gradients and the gradient with respect to the input.
    pub fn backward(&self, cache: &[Tensor], grad_out: &Tensor) -> Result<(Gradients, Tensor)> {
        if cache.len() != self.layers.len() {
            return invalid("activation cache does not match the network");
        }
        let mut grads: Vec<ParamGrads> = Vec::new();
        let mut g = grad_out.clone();
        for (layer, input) in self.layers.iter().zip(cache).rev() {
            let (p, gi) = layer.backward(input, &g)?;
            if let Some(p) = p {
                grads.push(p);
            }
            g = gi;
        }
        let flat = grads
            .into_iter()
            .rev()
            .flat_map(|p| [p.weights, p.bias])
            .collect();
        Ok((flat, g))
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv1d(l) => out.extend([l.weights.as_slice(), l.bias.as_slice()]),
                Layer::Dense(l) => out.extend([l.weights.as_slice(), l.bias.as_slice()]),
                Layer::Relu => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv1d(l) => out.extend([l.weights.as_mut_slice(), l.bias.as_mut_slice()]),
                Layer::Dense(l) => out.extend([l.weights.as_mut_slice(), l.bias.as_mut_slice()]),
                Layer::Relu => {}
            }
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// He-uniform weights for layers feeding a ReLU, Xavier-uniform
    /// otherwise; zero biases.
    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let n = self.layers.len();
        for i in 0..n {
            let feeds_relu = matches!(self.layers.get(i + 1), Some(Layer::Relu));
            let (fan_in, fan_out, weights, bias) = match &mut self.layers[i] {
                Layer::Conv1d(l) => (
                    l.in_channels * l.filter_len,
                    l.out_channels * l.filter_len,
                    &mut l.weights,
                    &mut l.bias,
                ),
                Layer::Dense(l) => (l.n_in, l.n_out, &mut l.weights, &mut l.bias),
                Layer::Relu => continue,
            };
            let limit = if feeds_relu {
                (6.0 / fan_in as f64).sqrt()
            } else {
                (6.0 / (fan_in + fan_out) as f64).sqrt()
            };
            for w in weights.iter_mut() {
                *w = rng.random_range(-limit..limit);
            }
            bias.fill(0.0);
        }
    }

    /// Forward pass with every executed multiply and add counted. Each
    /// output starts from its bias, then accumulates one product per term.
    pub fn forward_counted(&self, input: &Tensor) -> Result<(Tensor, OpTally)> {
        let mut tally = OpTally::default();
        let mut x = input.clone();
        for layer in &self.layers {
            x = match layer {
                Layer::Conv1d(l) => {
                    let k_out = l.check_input(&x)?;
                    let mut out = Tensor::zeros(l.out_channels, k_out);
                    for o in 0..l.out_channels {
                        for k in 0..k_out {
                            let mut acc = l.bias[o];
                            for c in 0..l.in_channels {
                                for f in 0..l.filter_len {
                                    let p = l.w(o, c)[f] * x.row(c)[k + f];
                                    tally.muls += 1;
                                    acc += p;
                                    tally.adds += 1;
                                }
                            }
                            out.data[o * k_out + k] = acc;
                        }
                    }
                    out
                }
                Layer::Dense(l) => {
                    if x.len() != l.n_in {
                        return invalid("dense input size mismatch");
                    }
                    let mut data = Vec::with_capacity(l.n_out);
                    for o in 0..l.n_out {
                        let mut acc = l.bias[o];
                        for i in 0..l.n_in {
                            let p = l.weights[o * l.n_in + i] * x.data[i];
                            tally.muls += 1;
                            acc += p;
                            tally.adds += 1;
                        }
                        data.push(acc);
                    }
                    Tensor {
                        channels: l.n_out,
                        width: 1,
                        data,
                    }
                }
                Layer::Relu => relu_forward(&x),
            };
        }
        Ok((x, tally))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            alpha: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates shaped like the parameter list they were created for.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: &[usize]) -> Self {
        Self {
            config,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn for_params(config: AdamConfig, params: &[&[f64]]) -> Self {
        let shapes: Vec<usize> = params.iter().map(|p| p.len()).collect();
        Self::new(config, &shapes)
    }

    /// One bias-corrected Adam update. A non-finite gradient rejects the
    /// whole step and leaves parameters and state untouched.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return invalid("parameter, gradient and state counts differ");
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != g.len() || p.len() != m.len() {
                return invalid("parameter and gradient shapes differ");
            }
        }
        if grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::Numerical("non-finite gradient".into()));
        }
        let AdamConfig {
            alpha,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.t += 1;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= alpha * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Mse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: Loss,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 80,
            epochs: 400,
            loss: Loss::Mse,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub input: Tensor,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    /// Mean per-sample loss seen during each epoch.
    pub train_loss: Vec<f64>,
    /// Mean loss over the validation set after each epoch (empty without one).
    pub val_loss: Vec<f64>,
}

/// Mean per-sample loss over `samples`.
pub fn mean_loss(model: &Sequential, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return invalid("no samples");
    }
    let losses: Vec<f64> = samples
        .par_iter()
        .map(|s| {
            let out = model.forward(&s.input)?;
            mse_loss(&out.data, &s.target).map(|(l, _)| l)
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / samples.len() as f64)
}

/// Mini-batch Adam training, deterministic for a given seed.
///
/// Per-sample gradients of a batch are computed in parallel and summed in
/// batch order, so the thread count never changes the result.
pub fn train(
    model: &mut Sequential,
    samples: &[Sample],
    validation: Option<&[Sample]>,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    train_with(model, samples, validation, cfg, |_, _, _| {})
}

/// [`train`] with a callback receiving `(epoch, train_loss, val_loss)`.
pub fn train_with<F>(
    model: &mut Sequential,
    samples: &[Sample],
    validation: Option<&[Sample]>,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainHistory>
where
    F: FnMut(usize, f64, Option<f64>),
{
    if samples.is_empty() {
        return invalid("training set is empty");
    }
    if cfg.batch_size == 0 {
        return invalid("batch_size must be at least 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::for_params(cfg.adam, &model.params());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = TrainHistory::default();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let net = &*model;
            let per_sample: Vec<(f64, Gradients)> = batch
                .par_iter()
                .map(|&i| {
                    let s = &samples[i];
                    let (out, cache) = net.forward_cached(&s.input)?;
                    let (loss, grad) = mse_loss(&out.data, &s.target)?;
                    let g = Tensor {
                        channels: out.channels,
                        width: out.width,
                        data: grad.iter().map(|g| g * scale).collect(),
                    };
                    let (pg, _) = net.backward(&cache, &g)?;
                    Ok((loss, pg))
                })
                .collect::<Result<_>>()?;
            let mut iter = per_sample.into_iter();
            let (first_loss, mut acc) = iter.next().expect("non-empty batch");
            epoch_loss += first_loss;
            for (loss, g) in iter {
                epoch_loss += loss;
                for (a, b) in acc.iter_mut().zip(g) {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                }
            }
            let mut params = model.params_mut();
            adam.step(&mut params, &acc)?;
        }
        let train_loss = epoch_loss / samples.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::Numerical(format!("training loss diverged at epoch {epoch}")));
        }
        history.train_loss.push(train_loss);
        let val = match validation {
            Some(v) if !v.is_empty() => {
                let l = mean_loss(model, v)?;
                if !l.is_finite() {
                    return Err(Error::Numerical(format!(
                        "validation loss diverged at epoch {epoch}"
                    )));
                }
                history.val_loss.push(l);
                Some(l)
            }
            _ => None,
        };
        on_epoch(epoch, train_loss, val);
    }
    Ok(history)
}
