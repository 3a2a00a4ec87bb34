//! The 1D-CNN packet-start regressor.
//!
//! A block of B amplitude samples is standardized, reshaped into
//! `in_channels` interleaved channels (channel `c` at time `t` holds sample
//! `in_channels·t + c`) and run through
//!
//! ```text
//! Conv1d(4→9, F=8) + ReLU → Conv1d(9→5, F=3) + ReLU → flatten
//!   → Dense(→3) + ReLU → Dense(3→1)
//! ```
//!
//! The scalar output is the estimated start sample, or about −1 when the
//! block holds no packet start.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corrsync::DetectionResult;
use crate::error::{invalid, Error, Result};
use crate::nn::{self, Conv1dLayer, DenseLayer, Layer, OpTally, Sample, Sequential, Tensor};

pub const SUPPORTED_BLOCK_LENS: [usize; 6] = [40, 80, 160, 320, 800, 1600];

const CHECKPOINT_MAGIC: &[u8; 8] = b"WBCNNCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Subtract the block mean and divide by its standard deviation.
    Standardize,
    /// Divide each block by its RMS.
    Rms,
    /// Feed |y| unchanged.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CnnDetectorConfig {
    pub block_len: usize,
    pub in_channels: usize,
    pub conv1_filters: usize,
    pub conv1_filter_len: usize,
    pub conv2_filters: usize,
    pub conv2_filter_len: usize,
    pub fc_neurons: usize,
    pub no_packet_label: f64,
    pub detect_threshold: f64,
    pub normalization: Normalization,
    pub seed: u64,
}

impl CnnDetectorConfig {
    pub fn new(block_len: usize) -> Self {
        Self {
            block_len,
            in_channels: 4,
            conv1_filters: 9,
            conv1_filter_len: 8,
            conv2_filters: 5,
            conv2_filter_len: 3,
            fc_neurons: 3,
            no_packet_label: -1.0,
            detect_threshold: -0.5,
            normalization: Normalization::Standardize,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_len == 0 || self.in_channels == 0 {
            return invalid("block_len and in_channels must be positive");
        }
        if self.block_len % self.in_channels != 0 {
            return invalid(format!(
                "block length {} is not divisible by {} input channels",
                self.block_len, self.in_channels
            ));
        }
        if [
            self.conv1_filters,
            self.conv1_filter_len,
            self.conv2_filters,
            self.conv2_filter_len,
            self.fc_neurons,
        ]
        .contains(&0)
        {
            return invalid("layer sizes must be positive");
        }
        let width = self.block_len / self.in_channels;
        if width < self.conv1_filter_len + self.conv2_filter_len - 1 {
            return invalid(format!(
                "block width {width} too short for filters of {} and {}",
                self.conv1_filter_len, self.conv2_filter_len
            ));
        }
        if !self.detect_threshold.is_finite() || !self.no_packet_label.is_finite() {
            return invalid("threshold and label must be finite");
        }
        Ok(())
    }

    pub fn dims(&self) -> Result<ModelDims> {
        self.validate()?;
        let input_width = self.block_len / self.in_channels;
        let conv1_width = input_width - self.conv1_filter_len + 1;
        let conv2_width = conv1_width - self.conv2_filter_len + 1;
        Ok(ModelDims {
            input_width,
            conv1_width,
            conv2_width,
            flatten: conv2_width * self.conv2_filters,
            fc: self.fc_neurons,
        })
    }
}

/// Activation widths: T, K1, K2, the flattened size and the FC width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub input_width: usize,
    pub conv1_width: usize,
    pub conv2_width: usize,
    pub flatten: usize,
    pub fc: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BlockKind {
    Start,
    NoiseOnly,
    MidTail,
}

impl BlockKind {
    pub fn code(self) -> u8 {
        match self {
            BlockKind::Start => 0,
            BlockKind::NoiseOnly => 1,
            BlockKind::MidTail => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(BlockKind::Start),
            1 => Some(BlockKind::NoiseOnly),
            2 => Some(BlockKind::MidTail),
            _ => None,
        }
    }
}

/// One dataset record: |y| over a block and its packet-start label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBlock {
    pub amplitudes: Vec<f32>,
    /// Start sample within the block, or −1.
    pub label: f32,
    pub snr_db: f32,
    pub kind: BlockKind,
}

impl LabeledBlock {
    pub fn has_start(&self) -> bool {
        self.label >= 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let start = self.kind == BlockKind::Start;
        if start != (self.label >= 0.0) || (!start && self.label != -1.0) {
            return invalid(format!("label {} inconsistent with {:?}", self.label, self.kind));
        }
        if start && (self.label.fract() != 0.0 || self.label as usize >= self.amplitudes.len()) {
            return invalid(format!("start label {} outside the block", self.label));
        }
        if self.amplitudes.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return invalid("amplitudes must be finite and non-negative");
        }
        Ok(())
    }
}

/// Interleaved reshape: channel `c`, time `t` ← `block[in_channels·t + c]`.
pub fn block_to_channels(block: &[f64], in_channels: usize) -> Result<Tensor> {
    if in_channels == 0 || block.len() % in_channels != 0 {
        return invalid(format!(
            "block of {} samples does not split into {in_channels} channels",
            block.len()
        ));
    }
    let width = block.len() / in_channels;
    let mut data = vec![0.0; block.len()];
    for (i, &v) in block.iter().enumerate() {
        data[(i % in_channels) * width + i / in_channels] = v;
    }
    Tensor::new(in_channels, width, data)
}

/// Inverse of [`block_to_channels`].
pub fn channels_to_block(t: &Tensor) -> Vec<f64> {
    let mut out = vec![0.0; t.len()];
    for c in 0..t.channels {
        for (k, &v) in t.row(c).iter().enumerate() {
            out[k * t.channels + c] = v;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    pub config: CnnDetectorConfig,
    pub net: Sequential,
}

fn architecture(cfg: &CnnDetectorConfig) -> Result<Sequential> {
    let d = cfg.dims()?;
    Ok(Sequential::new(vec![
        Layer::Conv1d(Conv1dLayer::zeros(
            cfg.in_channels,
            cfg.conv1_filters,
            cfg.conv1_filter_len,
        )?),
        Layer::Relu,
        Layer::Conv1d(Conv1dLayer::zeros(
            cfg.conv1_filters,
            cfg.conv2_filters,
            cfg.conv2_filter_len,
        )?),
        Layer::Relu,
        Layer::Dense(DenseLayer::zeros(d.flatten, cfg.fc_neurons)?),
        Layer::Relu,
        Layer::Dense(DenseLayer::zeros(cfg.fc_neurons, 1)?),
    ]))
}

/// Builds the network with seeded He/Xavier initialization.
pub fn build_model(cfg: &CnnDetectorConfig) -> Result<CnnModel> {
    let mut net = architecture(cfg)?;
    net.init(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    Ok(CnnModel { config: *cfg, net })
}

impl CnnModel {
    /// All weights zero and the output bias at the no-packet label.
    pub fn silent(cfg: &CnnDetectorConfig) -> Result<Self> {
        let mut net = architecture(cfg)?;
        if let Some(Layer::Dense(out)) = net.layers.last_mut() {
            out.bias[0] = cfg.no_packet_label;
        }
        Ok(Self { config: *cfg, net })
    }

    /// Normalizes and reshapes a block for the network.
    pub fn prepare(&self, block: &[f64]) -> Result<Tensor> {
        prepare_block(block, &self.config)
    }

    /// Raw scalar output for a block.
    pub fn predict(&self, block: &[f64]) -> Result<f64> {
        Ok(self.net.forward(&self.prepare(block)?)?.data[0])
    }

    pub fn forward_counted(&self, block: &[f64]) -> Result<(f64, OpTally)> {
        let (out, tally) = self.net.forward_counted(&self.prepare(block)?)?;
        Ok((out.data[0], tally))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes();
        fs::write(path, &bytes)?;
        let manifest = CheckpointManifest {
            format_version: CHECKPOINT_VERSION,
            config: self.config,
            dims: self.config.dims()?,
            layers: self.layer_shapes(),
            n_params: self.net.n_params(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        };
        fs::write(manifest_path(path), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    fn layer_shapes(&self) -> Vec<LayerShape> {
        let names = ["conv1", "conv2", "fc", "output"];
        let mut out = Vec::new();
        let mut params = self.net.layers.iter().filter(|l| !matches!(l, Layer::Relu));
        for name in names {
            match params.next() {
                Some(Layer::Conv1d(l)) => out.push(LayerShape {
                    name: name.into(),
                    weights: vec![l.out_channels, l.in_channels, l.filter_len],
                    bias: l.out_channels,
                }),
                Some(Layer::Dense(l)) => out.push(LayerShape {
                    name: name.into(),
                    weights: vec![l.n_out, l.n_in],
                    bias: l.n_out,
                }),
                _ => {}
            }
        }
        out
    }

    /// Binary checkpoint: magic, version, hyperparameters, then every
    /// parameter as little-endian f64 in [`Sequential`] order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut b = Vec::new();
        b.extend_from_slice(CHECKPOINT_MAGIC);
        b.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for v in [
            c.block_len,
            c.in_channels,
            c.conv1_filters,
            c.conv1_filter_len,
            c.conv2_filters,
            c.conv2_filter_len,
            c.fc_neurons,
        ] {
            b.extend_from_slice(&(v as u32).to_le_bytes());
        }
        b.push(match c.normalization {
            Normalization::Rms => 0,
            Normalization::Raw => 1,
            Normalization::Standardize => 2,
        });
        b.extend_from_slice(&c.no_packet_label.to_le_bytes());
        b.extend_from_slice(&c.detect_threshold.to_le_bytes());
        b.extend_from_slice(&c.seed.to_le_bytes());
        b.extend_from_slice(&(self.net.n_params() as u64).to_le_bytes());
        for p in self.net.params() {
            for v in p {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Corrupt("not a model checkpoint".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Corrupt(format!("unsupported checkpoint version {version}")));
        }
        let mut dims = [0usize; 7];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let normalization = match r.take(1)?[0] {
            0 => Normalization::Rms,
            1 => Normalization::Raw,
            2 => Normalization::Standardize,
            n => return Err(Error::Corrupt(format!("unknown normalization {n}"))),
        };
        let config = CnnDetectorConfig {
            block_len: dims[0],
            in_channels: dims[1],
            conv1_filters: dims[2],
            conv1_filter_len: dims[3],
            conv2_filters: dims[4],
            conv2_filter_len: dims[5],
            fc_neurons: dims[6],
            normalization,
            no_packet_label: r.f64()?,
            detect_threshold: r.f64()?,
            seed: r.u64()?,
        };
        let mut net = architecture(&config).map_err(|e| Error::Corrupt(e.to_string()))?;
        let n_params = r.u64()? as usize;
        if n_params != net.n_params() {
            return Err(Error::Corrupt(format!(
                "checkpoint holds {n_params} parameters, architecture needs {}",
                net.n_params()
            )));
        }
        for p in net.params_mut() {
            for v in p.iter_mut() {
                *v = r.f64()?;
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Corrupt("trailing bytes after parameters".into()));
        }
        Ok(Self { config, net })
    }
}

pub fn manifest_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("json")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    pub weights: Vec<usize>,
    pub bias: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub config: CnnDetectorConfig,
    pub dims: ModelDims,
    pub layers: Vec<LayerShape>,
    pub n_params: usize,
    pub sha256: String,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Corrupt("checkpoint truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn prepare_block(block: &[f64], cfg: &CnnDetectorConfig) -> Result<Tensor> {
    if block.len() != cfg.block_len {
        return invalid(format!(
            "block has {} samples, model expects {}",
            block.len(),
            cfg.block_len
        ));
    }
    match cfg.normalization {
        Normalization::Raw => block_to_channels(block, cfg.in_channels),
        Normalization::Standardize => {
            let n = block.len() as f64;
            let mean = block.iter().sum::<f64>() / n;
            let sd = (block.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
            let scale = if sd > 0.0 { 1.0 / sd } else { 0.0 };
            let z: Vec<f64> = block.iter().map(|v| (v - mean) * scale).collect();
            block_to_channels(&z, cfg.in_channels)
        }
        Normalization::Rms => {
            let rms = (block.iter().map(|v| v * v).sum::<f64>() / block.len() as f64).sqrt();
            if rms > 0.0 {
                let scaled: Vec<f64> = block.iter().map(|v| v / rms).collect();
                block_to_channels(&scaled, cfg.in_channels)
            } else {
                block_to_channels(block, cfg.in_channels)
            }
        }
    }
}

/// Start estimate from a raw network output.
pub fn decide(p: f64, cfg: &CnnDetectorConfig) -> DetectionResult {
    if p >= cfg.detect_threshold {
        let start = p.clamp(0.0, (cfg.block_len - 1) as f64).round() as usize;
        DetectionResult::at(start, p)
    } else {
        DetectionResult::not_detected(p)
    }
}

pub fn detect(model: &CnnModel, block: &[f64]) -> Result<DetectionResult> {
    Ok(decide(model.predict(block)?, &model.config))
}

fn block_f64(b: &LabeledBlock) -> Vec<f64> {
    b.amplitudes.iter().map(|&a| a as f64).collect()
}

/// Converts labeled blocks into network samples.
pub fn to_samples(model: &CnnModel, blocks: &[LabeledBlock]) -> Result<Vec<Sample>> {
    blocks
        .par_iter()
        .map(|b| {
            Ok(Sample {
                input: model.prepare(&block_f64(b))?,
                target: vec![b.label as f64],
            })
        })
        .collect()
}

/// Trains on raw sample-index labels.
///
/// The optimizer works on targets centered and scaled by the training-label
/// mean `c` and spread `s`: the output layer is rescaled into that space
/// before training and folded back afterwards, so the saved network still
/// maps a block to a raw index. Without it, Adam's bounded per-step motion
/// spends most of a short run just growing the output to the label range.
/// Reported losses are in raw label units.
pub fn train_detector<F>(
    model: &mut CnnModel,
    train: &[LabeledBlock],
    validation: &[LabeledBlock],
    cfg: &nn::TrainConfig,
    mut on_epoch: F,
) -> Result<nn::TrainHistory>
where
    F: FnMut(usize, f64, Option<f64>),
{
    let (c, s) = label_moments(train)?;
    let to_unit = |mut v: Vec<Sample>| {
        v.iter_mut().for_each(|x| x.target[0] = (x.target[0] - c) / s);
        v
    };
    let train_samples = to_unit(to_samples(model, train)?);
    let val_samples = to_unit(to_samples(model, validation)?);
    let val = (!val_samples.is_empty()).then_some(val_samples.as_slice());

    rescale_output(&mut model.net, 1.0 / s, -c / s)?;
    let s2 = s * s;
    let res = nn::train_with(&mut model.net, &train_samples, val, cfg, |e, t, v| {
        on_epoch(e, t * s2, v.map(|v| v * s2))
    });
    rescale_output(&mut model.net, s, c)?;
    let mut h = res?;
    h.train_loss.iter_mut().for_each(|l| *l *= s2);
    h.val_loss.iter_mut().for_each(|l| *l *= s2);
    Ok(h)
}

fn label_moments(blocks: &[LabeledBlock]) -> Result<(f64, f64)> {
    if blocks.is_empty() {
        return invalid("training set is empty");
    }
    let n = blocks.len() as f64;
    let c = blocks.iter().map(|b| b.label as f64).sum::<f64>() / n;
    let var = blocks
        .iter()
        .map(|b| (b.label as f64 - c).powi(2))
        .sum::<f64>()
        / n;
    Ok((c, if var > 0.0 { var.sqrt() } else { 1.0 }))
}

/// Output layer ← `gain`·output + `offset`.
fn rescale_output(net: &mut Sequential, gain: f64, offset: f64) -> Result<()> {
    match net.layers.last_mut() {
        Some(Layer::Dense(l)) if l.n_out == 1 => {
            l.weights.iter_mut().for_each(|w| *w *= gain);
            l.bias[0] = l.bias[0] * gain + offset;
            Ok(())
        }
        _ => invalid("network does not end in a scalar dense layer"),
    }
}

/// Raw network outputs for every block, in order.
pub fn predict_all(model: &CnnModel, blocks: &[LabeledBlock]) -> Result<Vec<f64>> {
    blocks
        .par_iter()
        .map(|b| model.predict(&block_f64(b)))
        .collect()
}

pub const SNR_BIN_WIDTH_DB: f64 = 5.0;
pub const SNR_RANGE_DB: (f64, f64) = (0.0, 25.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrBin {
    pub lo: f64,
    pub hi: f64,
    /// Absent when no true-positive block fell in the bin.
    pub mae: Option<f64>,
    /// True-positive blocks contributing to `mae`.
    pub n: usize,
}

/// Ground truth of one trial: where the packet starts, if anywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truth {
    pub start: Option<f64>,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean |start − label| over detected blocks that hold a start.
    pub mae: Option<f64>,
    pub miss_rate: f64,
    pub false_alarm_rate: f64,
    pub n_start: usize,
    pub n_no_start: usize,
    pub mae_per_snr_bin: Vec<SnrBin>,
}

fn snr_bin(snr: f64, n_bins: usize) -> Option<usize> {
    let (lo, hi) = SNR_RANGE_DB;
    if !(lo..=hi).contains(&snr) {
        return None;
    }
    Some((((snr - lo) / SNR_BIN_WIDTH_DB) as usize).min(n_bins - 1))
}

impl Metrics {
    /// Scores detector verdicts against the labels. Sums run in block order.
    pub fn from_detections(blocks: &[LabeledBlock], detections: &[DetectionResult]) -> Result<Self> {
        let truth: Vec<Truth> = blocks
            .iter()
            .map(|b| Truth {
                start: b.has_start().then_some(b.label as f64),
                snr_db: b.snr_db as f64,
            })
            .collect();
        Self::from_truth(&truth, detections)
    }

    pub fn from_truth(truth: &[Truth], detections: &[DetectionResult]) -> Result<Self> {
        if truth.is_empty() {
            return invalid("no blocks to evaluate");
        }
        if truth.len() != detections.len() {
            return invalid("one detection per block required");
        }
        let (lo, hi) = SNR_RANGE_DB;
        let n_bins = ((hi - lo) / SNR_BIN_WIDTH_DB).round() as usize;
        let mut bin_sum = vec![0.0; n_bins];
        let mut bin_n = vec![0usize; n_bins];
        let (mut n_start, mut n_no, mut missed, mut false_alarms) = (0, 0, 0, 0);
        let (mut err_sum, mut n_tp) = (0.0, 0usize);
        for (t, d) in truth.iter().zip(detections) {
            if let Some(start) = t.start {
                n_start += 1;
                if d.detected {
                    let err = (d.start_sample as f64 - start).abs();
                    err_sum += err;
                    n_tp += 1;
                    if let Some(i) = snr_bin(t.snr_db, n_bins) {
                        bin_sum[i] += err;
                        bin_n[i] += 1;
                    }
                } else {
                    missed += 1;
                }
            } else {
                n_no += 1;
                if d.detected {
                    false_alarms += 1;
                }
            }
        }
        let rate = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        Ok(Self {
            mae: (n_tp > 0).then(|| err_sum / n_tp as f64),
            miss_rate: rate(missed, n_start),
            false_alarm_rate: rate(false_alarms, n_no),
            n_start,
            n_no_start: n_no,
            mae_per_snr_bin: (0..n_bins)
                .map(|i| SnrBin {
                    lo: lo + i as f64 * SNR_BIN_WIDTH_DB,
                    hi: lo + (i + 1) as f64 * SNR_BIN_WIDTH_DB,
                    mae: (bin_n[i] > 0).then(|| bin_sum[i] / bin_n[i] as f64),
                    n: bin_n[i],
                })
                .collect(),
        })
    }

    pub fn bin(&self, lo: f64) -> Option<&SnrBin> {
        self.mae_per_snr_bin.iter().find(|b| b.lo == lo)
    }

    /// `snr_bin_lo,snr_bin_hi,mae,n`; an absent MAE is an empty field.
    pub fn write_bins_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "snr_bin_lo,snr_bin_hi,mae,n")?;
        for b in &self.mae_per_snr_bin {
            let mae = b.mae.map(|m| m.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{}", b.lo, b.hi, mae, b.n)?;
        }
        Ok(())
    }

    /// `miss_rate,false_alarm_rate` plus one row.
    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "miss_rate,false_alarm_rate")?;
        writeln!(w, "{},{}", self.miss_rate, self.false_alarm_rate)
    }
}

/// Runs the model over every block and scores the verdicts.
pub fn evaluate(model: &CnnModel, blocks: &[LabeledBlock]) -> Result<Metrics> {
    let dets: Vec<DetectionResult> = predict_all(model, blocks)?
        .into_iter()
        .map(|p| decide(p, &model.config))
        .collect();
    Metrics::from_detections(blocks, &dets)
}

/// Mean |clamp(round(p), 0, B−1) − label| over every block with a start,
/// ignoring the detection threshold. Measures the regressor alone.
pub fn position_mae(model: &CnnModel, blocks: &[LabeledBlock]) -> Result<Option<f64>> {
    let starts: Vec<LabeledBlock> = blocks.iter().filter(|b| b.has_start()).cloned().collect();
    if starts.is_empty() {
        return Ok(None);
    }
    let max = (model.config.block_len - 1) as f64;
    let preds = predict_all(model, &starts)?;
    let total: f64 = preds
        .iter()
        .zip(&starts)
        .map(|(p, b)| (p.clamp(0.0, max).round() - b.label as f64).abs())
        .sum();
    Ok(Some(total / starts.len() as f64))
}
