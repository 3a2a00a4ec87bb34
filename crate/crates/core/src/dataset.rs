//! Labeled-block datasets.
//!
//! Every block comes out of the same transmit chain: base-rate stream →
//! pulse-shaping interpolator → channel at the oversampled rate →
//! matched filter and decimation. Noise is calibrated against the nominal
//! preamble power, so the SNR tag means the same thing for all block kinds.
//! The tag is the channel SNR at the oversampled rate; the matched filter
//! adds 10·log10(os) on the way to the detector.
//!
//! Block `i` draws from its own ChaCha8 stream `(seed, i)`, so generation
//! order and thread count never change the bytes.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{apply_channel, rx_frontend, ChannelTemplate, RxFrontendConfig};
use crate::cnn::{BlockKind, LabeledBlock};
use crate::error::{invalid, Error, Result};
use crate::preamble::{build_preamble, upsample_filter, OfdmParams, PreambleSpec, PulseShape};
use crate::signal::ComplexSignal;

const BLOCKS_MAGIC: &[u8; 8] = b"WBBLOCKS";
pub const DATASET_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let f = [self.train, self.val, self.test];
        if f.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return invalid("split fractions must lie in [0, 1]");
        }
        if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return invalid("split fractions must sum to 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub block_len: usize,
    pub n_blocks: usize,
    pub frac_no_start: f64,
    pub frac_noise_within_no_start: f64,
    pub snr_range_db: [f64; 2],
    pub split: SplitFractions,
    pub seed: u64,
    pub channel: ChannelTemplate,
    pub pulse_shape: PulseShape,
    pub os_factor: usize,
    pub ofdm: OfdmParams,
    /// `None` uses [`PreambleSpec::synthetic_default`].
    pub preamble: Option<PreambleSpec>,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            block_len: 160,
            n_blocks: 50_000,
            frac_no_start: 0.5,
            frac_noise_within_no_start: 0.5,
            snr_range_db: [0.0, 25.0],
            split: SplitFractions::default(),
            seed: 0,
            channel: ChannelTemplate::default(),
            pulse_shape: PulseShape::default(),
            os_factor: 4,
            ofdm: OfdmParams::default(),
            preamble: None,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.block_len == 0 || self.n_blocks == 0 {
            return invalid("block_len and n_blocks must be positive");
        }
        for (name, f) in [
            ("frac_no_start", self.frac_no_start),
            ("frac_noise_within_no_start", self.frac_noise_within_no_start),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return invalid(format!("{name} must lie in [0, 1]"));
            }
        }
        let [lo, hi] = self.snr_range_db;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return invalid("snr_range_db must be a finite [lo, hi] with lo <= hi");
        }
        if self.os_factor == 0 {
            return invalid("os_factor must be at least 1");
        }
        if !(self.channel.timing_offset_max >= 0.0) || !(self.channel.cfo_max_hz >= 0.0) {
            return invalid("channel ranges must be non-negative");
        }
        self.split.validate()?;
        self.ofdm.validate()?;
        if let Some(p) = &self.preamble {
            p.validate()?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let spec: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        spec.validate()?;
        Ok(spec)
    }

    fn preamble_spec(&self) -> PreambleSpec {
        self.preamble.clone().unwrap_or_else(PreambleSpec::synthetic_default)
    }
}

/// Transmit chain shared by dataset generation and stream evaluation.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub preamble: ComplexSignal,
    pub tx_taps: Vec<f64>,
    pub rx: RxFrontendConfig,
    pub os_factor: usize,
    pub channel: ChannelTemplate,
    /// Mean preamble power at the base rate; the noise reference.
    pub nominal_power: f64,
}

/// A received base-rate stream and where the packet starts in it.
#[derive(Debug, Clone)]
pub struct Stream {
    pub samples: ComplexSignal,
    pub onset: Option<usize>,
}

impl Simulator {
    pub fn new(
        spec: &PreambleSpec,
        ofdm: &OfdmParams,
        shape: &PulseShape,
        os_factor: usize,
        channel: ChannelTemplate,
    ) -> Result<Self> {
        let preamble = build_preamble(spec, ofdm)?;
        let nominal_power = preamble.mean_power();
        Ok(Self {
            tx_taps: shape.taps(os_factor)?,
            rx: RxFrontendConfig::matched_to(shape, os_factor)?,
            preamble,
            os_factor,
            channel,
            nominal_power,
        })
    }

    pub fn for_dataset(spec: &DatasetSpec) -> Result<Self> {
        spec.validate()?;
        Self::new(
            &spec.preamble_spec(),
            &spec.ofdm,
            &spec.pulse_shape,
            spec.os_factor,
            spec.channel,
        )
    }

    fn base_rate(&self) -> f64 {
        self.preamble.sample_rate_hz
    }

    /// Receives `len` base-rate samples with the preamble sent at
    /// `tx_start` (or no packet at all). The returned onset includes the
    /// channel's timing offset rounded to the base-rate grid.
    pub fn stream<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        snr_db: Option<f64>,
        tx_start: Option<usize>,
        len: usize,
    ) -> Result<Stream> {
        let rate = self.base_rate();
        let os_rate = rate * self.os_factor as f64;
        let mut cfg = self.channel.realize(rng, snr_db, os_rate);
        cfg.reference_power = Some(self.nominal_power);

        let mut tx = vec![Complex64::new(0.0, 0.0); len + 1];
        let mut onset = None;
        if let Some(start) = tx_start {
            let end = (start + self.preamble.len()).min(tx.len());
            if start < end {
                tx[start..end].copy_from_slice(&self.preamble.samples[..end - start]);
            }
            let shift = (cfg.timing_offset_samples.round() / self.os_factor as f64).round() as usize;
            onset = Some(start + shift);
        }
        let up = upsample_filter(&ComplexSignal::new(tx, rate), self.os_factor, &self.tx_taps)?;
        let mut rx = rx_frontend(&apply_channel(&up, &cfg)?, &self.rx)?;
        if rx.len() < len {
            return Err(Error::Numerical("receive chain returned a short stream".into()));
        }
        rx.samples.truncate(len);
        Ok(Stream { samples: rx, onset })
    }
}

/// What generation did for one block. `onset` is the packet start relative
/// to the block's first sample; negative means it lies before the block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockTrace {
    pub onset: Option<i64>,
}

/// Earliest in-packet offset a MID_TAIL window may start at.
const MID_TAIL_MIN_OFFSET: usize = 1;

fn block_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn generate_one(spec: &DatasetSpec, sim: &Simulator, index: usize) -> Result<(LabeledBlock, BlockTrace)> {
    let mut rng = block_rng(spec.seed, index);
    let b = spec.block_len;
    let kind = if rng.random::<f64>() < spec.frac_no_start {
        if rng.random::<f64>() < spec.frac_noise_within_no_start {
            BlockKind::NoiseOnly
        } else {
            BlockKind::MidTail
        }
    } else {
        BlockKind::Start
    };
    let [lo, hi] = spec.snr_range_db;
    let snr = if hi > lo { rng.random_range(lo..hi) } else { lo };
    let max_shift = (spec.channel.timing_offset_max / spec.os_factor as f64).ceil() as usize + 1;
    let packet = sim.preamble.len();

    let (stream, block_start, label) = match kind {
        BlockKind::NoiseOnly => (sim.stream(&mut rng, Some(snr), None, b)?, 0, -1.0),
        BlockKind::Start => {
            let tau = rng.random_range(0..b);
            let tx_start = max_shift + tau;
            let s = sim.stream(&mut rng, Some(snr), Some(tx_start), tx_start + packet.max(b) + max_shift)?;
            let onset = s.onset.expect("packet sent");
            (s, onset - tau, tau as f32)
        }
        BlockKind::MidTail => {
            let u = rng.random_range(MID_TAIL_MIN_OFFSET..packet);
            let s = sim.stream(&mut rng, Some(snr), Some(0), max_shift + u + b)?;
            let onset = s.onset.expect("packet sent");
            (s, onset + u, -1.0)
        }
    };
    let amplitudes: Vec<f32> = stream.samples.samples[block_start..block_start + b]
        .iter()
        .map(|z| z.norm() as f32)
        .collect();
    let trace = BlockTrace {
        onset: stream.onset.map(|o| o as i64 - block_start as i64),
    };
    Ok((
        LabeledBlock {
            amplitudes,
            label,
            snr_db: snr as f32,
            kind,
        },
        trace,
    ))
}

/// Blocks together with their generation bookkeeping.
pub fn generate_traced(spec: &DatasetSpec) -> Result<Vec<(LabeledBlock, BlockTrace)>> {
    let sim = Simulator::for_dataset(spec)?;
    (0..spec.n_blocks)
        .into_par_iter()
        .map(|i| generate_one(spec, &sim, i))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub blocks: Vec<LabeledBlock>,
}

pub fn generate(spec: &DatasetSpec) -> Result<Dataset> {
    let blocks = generate_traced(spec)?.into_iter().map(|(b, _)| b).collect();
    Ok(Dataset {
        spec: spec.clone(),
        blocks,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCounts {
    pub start: usize,
    pub noise_only: usize,
    pub mid_tail: usize,
}

pub fn count_kinds(blocks: &[LabeledBlock]) -> KindCounts {
    let mut c = KindCounts::default();
    for b in blocks {
        match b.kind {
            BlockKind::Start => c.start += 1,
            BlockKind::NoiseOnly => c.noise_only += 1,
            BlockKind::MidTail => c.mid_tail += 1,
        }
    }
    c
}

/// Index partition into train/val/test.
///
/// START and non-START indices are shuffled separately, interleaved at
/// their overall ratio and then cut into contiguous pieces, which keeps the
/// class balance of every piece within one block of the whole.
pub fn split_indices(
    blocks: &[LabeledBlock],
    fractions: &SplitFractions,
    seed: u64,
) -> Result<[Vec<usize>; 3]> {
    fractions.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut starts, mut others): (Vec<usize>, Vec<usize>) =
        (0..blocks.len()).partition(|&i| blocks[i].has_start());
    use rand::seq::SliceRandom;
    starts.shuffle(&mut rng);
    others.shuffle(&mut rng);

    // merge at positions (k + 0.5) / n_class, compared exactly in integers
    let (ns, no) = (starts.len(), others.len());
    let mut order = Vec::with_capacity(blocks.len());
    let (mut i, mut j) = (0, 0);
    while i < ns || j < no {
        let take_start = j >= no || (i < ns && (2 * i + 1) * no <= (2 * j + 1) * ns);
        if take_start {
            order.push(starts[i]);
            i += 1;
        } else {
            order.push(others[j]);
            j += 1;
        }
    }

    let n = blocks.len();
    let n_train = ((fractions.train * n as f64).round() as usize).min(n);
    let n_val = ((fractions.val * n as f64).round() as usize).min(n - n_train);
    let test = order.split_off(n_train + n_val);
    let val = order.split_off(n_train);
    Ok([order, val, test])
}

pub fn split(
    blocks: &[LabeledBlock],
    fractions: &SplitFractions,
    seed: u64,
) -> Result<[Vec<LabeledBlock>; 3]> {
    let parts = split_indices(blocks, fractions, seed)?;
    Ok(parts.map(|idx| idx.into_iter().map(|i| blocks[i].clone()).collect()))
}

impl Dataset {
    pub fn split(&self) -> Result<[Vec<LabeledBlock>; 3]> {
        split(&self.blocks, &self.spec.split, self.spec.seed)
    }

    pub fn record_stride(&self) -> usize {
        record_stride(self.spec.block_len)
    }

    /// Header plus fixed-stride little-endian records.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let b = self.spec.block_len;
        let mut out = Vec::with_capacity(HEADER_LEN + self.blocks.len() * record_stride(b));
        out.extend_from_slice(BLOCKS_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(b as u32).to_le_bytes());
        out.extend_from_slice(&(self.blocks.len() as u64).to_le_bytes());
        for blk in &self.blocks {
            if blk.amplitudes.len() != b {
                return invalid(format!(
                    "block of {} samples in a B = {b} dataset",
                    blk.amplitudes.len()
                ));
            }
            for a in &blk.amplitudes {
                out.extend_from_slice(&a.to_le_bytes());
            }
            out.extend_from_slice(&blk.label.to_le_bytes());
            out.extend_from_slice(&blk.snr_db.to_le_bytes());
            out.push(blk.kind.code());
        }
        Ok(out)
    }

    /// Writes `<prefix>.blocks.bin` and `<prefix>.manifest.json`.
    pub fn save(&self, prefix: impl AsRef<Path>) -> Result<DatasetManifest> {
        let prefix = prefix.as_ref();
        let bytes = self.to_bytes()?;
        let manifest = DatasetManifest {
            format_version: DATASET_VERSION,
            spec: self.spec.clone(),
            block_len: self.spec.block_len,
            n_blocks: self.blocks.len(),
            counts: count_kinds(&self.blocks),
            record_stride: self.record_stride(),
            blocks_file: blocks_path(prefix)
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        };
        fs::write(blocks_path(prefix), &bytes)?;
        fs::write(
            manifest_path(prefix),
            serde_json::to_string_pretty(&manifest)? + "\n",
        )?;
        Ok(manifest)
    }

    pub fn load(prefix: impl AsRef<Path>) -> Result<Self> {
        let prefix = prefix.as_ref();
        let manifest: DatasetManifest =
            serde_json::from_str(&fs::read_to_string(manifest_path(prefix))?)
                .map_err(|e| Error::Corrupt(format!("dataset manifest: {e}")))?;
        if manifest.format_version != DATASET_VERSION {
            return Err(Error::Corrupt(format!(
                "dataset format version {} (expected {DATASET_VERSION})",
                manifest.format_version
            )));
        }
        let bytes = fs::read(blocks_path(prefix))?;
        if hex::encode(Sha256::digest(&bytes)) != manifest.sha256 {
            return Err(Error::Corrupt("dataset checksum mismatch".into()));
        }
        let blocks = parse_blocks(&bytes)?;
        let b = manifest.block_len;
        if b != manifest.spec.block_len || blocks.first().is_some_and(|x| x.amplitudes.len() != b) {
            return Err(Error::Corrupt(format!(
                "manifest block_len {b} disagrees with the records"
            )));
        }
        if blocks.len() != manifest.n_blocks {
            return Err(Error::Corrupt(format!(
                "manifest lists {} blocks, file holds {}",
                manifest.n_blocks,
                blocks.len()
            )));
        }
        if count_kinds(&blocks) != manifest.counts {
            return Err(Error::Corrupt("kind counts disagree with the manifest".into()));
        }
        Ok(Self {
            spec: manifest.spec,
            blocks,
        })
    }
}

pub fn record_stride(block_len: usize) -> usize {
    4 * block_len + 4 + 4 + 1
}

fn parse_blocks(bytes: &[u8]) -> Result<Vec<LabeledBlock>> {
    let corrupt = |m: &str| Error::Corrupt(m.to_string());
    if bytes.len() < HEADER_LEN || &bytes[..8] != BLOCKS_MAGIC {
        return Err(corrupt("not a block file"));
    }
    let u32_at = |p: usize| u32::from_le_bytes(bytes[p..p + 4].try_into().expect("4 bytes"));
    let f32_at = |p: usize| f32::from_le_bytes(bytes[p..p + 4].try_into().expect("4 bytes"));
    let version = u32_at(8);
    if version != DATASET_VERSION {
        return Err(Error::Corrupt(format!("block file version {version}")));
    }
    let b = u32_at(12) as usize;
    let n = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) as usize;
    let stride = record_stride(b);
    if b == 0 || bytes.len() != HEADER_LEN + n * stride {
        return Err(corrupt("block file truncated or padded"));
    }
    let mut blocks = Vec::with_capacity(n);
    for r in 0..n {
        let base = HEADER_LEN + r * stride;
        let amplitudes = (0..b).map(|k| f32_at(base + 4 * k)).collect();
        let kind = BlockKind::from_code(bytes[base + 4 * b + 8])
            .ok_or_else(|| corrupt("unknown block kind"))?;
        let blk = LabeledBlock {
            amplitudes,
            label: f32_at(base + 4 * b),
            snr_db: f32_at(base + 4 * b + 4),
            kind,
        };
        blk.validate()
            .map_err(|e| Error::Corrupt(format!("record {r}: {e}")))?;
        blocks.push(blk);
    }
    Ok(blocks)
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn manifest_path(prefix: &Path) -> PathBuf {
    with_suffix(prefix, ".manifest.json")
}

pub fn blocks_path(prefix: &Path) -> PathBuf {
    with_suffix(prefix, ".blocks.bin")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub spec: DatasetSpec,
    pub block_len: usize,
    pub n_blocks: usize,
    pub counts: KindCounts,
    pub record_stride: usize,
    pub blocks_file: String,
    pub sha256: String,
}

impl DatasetManifest {
    pub fn load(prefix: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(manifest_path(
            prefix.as_ref(),
        ))?)?)
    }
}
