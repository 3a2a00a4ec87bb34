//! Oversampled channel: multipath, CFO, timing offset and AWGN, plus the
//! receiver's matched filter and decimator.
//!
//! Multipath is applied as a linear (streaming) convolution with the tail
//! kept, rather than the circular block model.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::preamble::PulseShape;
use crate::signal::{mean_power, ComplexSignal};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// One channel realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Impulse response at the oversampled rate, Σ|h|² = 1.
    pub taps: Vec<Complex64>,
    /// `None` disables the noise entirely.
    pub snr_db: Option<f64>,
    pub cfo_hz: f64,
    /// Delay in oversampled samples, quantized to the oversampled grid.
    pub timing_offset_samples: f64,
    pub seed: u64,
    /// Signal power the SNR refers to. `None` measures the mean power of the
    /// convolved input over its whole length.
    #[serde(default)]
    pub reference_power: Option<f64>,
}

impl ChannelConfig {
    /// Builds a config with `taps` rescaled to unit total power.
    pub fn new(taps: Vec<Complex64>, snr_db: Option<f64>, cfo_hz: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            taps: normalize_taps(taps)?,
            snr_db,
            cfo_hz,
            timing_offset_samples: 0.0,
            seed,
            reference_power: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Noise-free single-tap channel.
    pub fn identity() -> Self {
        Self {
            taps: vec![Complex64::new(1.0, 0.0)],
            snr_db: None,
            cfo_hz: 0.0,
            timing_offset_samples: 0.0,
            seed: 0,
            reference_power: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.taps.is_empty() {
            return invalid("channel has no taps");
        }
        let p: f64 = self.taps.iter().map(|t| t.norm_sqr()).sum();
        if (p - 1.0).abs() > 1e-9 {
            return invalid(format!("channel taps have total power {p}, expected 1"));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return invalid("snr_db must be finite");
            }
        }
        if !self.cfo_hz.is_finite() {
            return invalid("cfo_hz must be finite");
        }
        if !self.timing_offset_samples.is_finite() || self.timing_offset_samples < 0.0 {
            return invalid("timing offset must be a non-negative number of samples");
        }
        if let Some(p) = self.reference_power {
            if !(p.is_finite() && p > 0.0) {
                return invalid("reference_power must be positive");
            }
        }
        Ok(())
    }
}

pub fn normalize_taps(mut taps: Vec<Complex64>) -> Result<Vec<Complex64>> {
    let p: f64 = taps.iter().map(|t| t.norm_sqr()).sum();
    if !(p.is_finite() && p > 0.0) {
        return invalid("channel taps must have finite, non-zero power");
    }
    let s = 1.0 / p.sqrt();
    taps.iter_mut().for_each(|t| *t *= s);
    Ok(taps)
}

/// Exponential power-delay profile for the indoor model-B stand-in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelBProfile {
    pub rms_delay_spread_ns: f64,
    /// Taps beyond `truncation_factor` × RMS spread are dropped.
    pub truncation_factor: f64,
}

impl Default for ModelBProfile {
    fn default() -> Self {
        Self {
            rms_delay_spread_ns: 80.0,
            truncation_factor: 5.0,
        }
    }
}

fn rms_spread(pdp: &[f64], ts: f64) -> f64 {
    let total: f64 = pdp.iter().sum();
    let mean: f64 = pdp.iter().enumerate().map(|(k, p)| k as f64 * ts * p).sum::<f64>() / total;
    let second: f64 = pdp
        .iter()
        .enumerate()
        .map(|(k, p)| (k as f64 * ts).powi(2) * p)
        .sum::<f64>()
        / total;
    (second - mean * mean).max(0.0).sqrt()
}

impl ModelBProfile {
    /// Mean tap powers (summing to 1) on a grid of `1/rate_hz`.
    ///
    /// The exponential decay constant is solved so that the sampled,
    /// truncated profile itself has the configured RMS delay spread. If the
    /// grid is too coarse for that, the profile is as flat as the kept taps
    /// allow.
    pub fn power_delay_profile(&self, rate_hz: f64) -> Vec<f64> {
        let ts_ns = 1e9 / rate_hz;
        let span = self.truncation_factor * self.rms_delay_spread_ns;
        let n_extra = (span / ts_ns).floor().max(0.0) as usize;
        if n_extra == 0 || self.rms_delay_spread_ns <= 0.0 {
            return vec![1.0];
        }
        let profile = |decay_ns: f64| -> Vec<f64> {
            let raw: Vec<f64> = (0..=n_extra)
                .map(|k| (-(k as f64) * ts_ns / decay_ns).exp())
                .collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|p| p / s).collect()
        };
        let target = self.rms_delay_spread_ns;
        let flat = vec![1.0 / (n_extra + 1) as f64; n_extra + 1];
        if rms_spread(&flat, ts_ns) <= target {
            return flat;
        }
        // rms spread grows monotonically with the decay constant
        let (mut lo, mut hi) = (1e-3f64, 1e9f64);
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if rms_spread(&profile(mid), ts_ns) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        profile((lo * hi).sqrt())
    }

    /// Rayleigh realization of the profile, normalized to unit power.
    pub fn draw_taps<R: Rng + ?Sized>(&self, rng: &mut R, rate_hz: f64) -> Vec<Complex64> {
        let pdp = self.power_delay_profile(rate_hz);
        loop {
            let taps: Vec<Complex64> = pdp
                .iter()
                .map(|&p| {
                    let s = (p / 2.0).sqrt();
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex64::new(re * s, im * s)
                })
                .collect();
            if let Ok(t) = normalize_taps(taps) {
                return t;
            }
        }
    }
}

/// RMS delay spread in seconds of a tap vector on a grid of `1/rate_hz`.
pub fn rms_delay_spread(power_profile: &[f64], rate_hz: f64) -> f64 {
    rms_spread(power_profile, 1.0 / rate_hz)
}

/// Model-B tap realization for `seed` at the oversampled rate.
pub fn draw_model_b_taps(seed: u64, os_rate_hz: f64) -> Result<Vec<Complex64>> {
    if !(os_rate_hz >= 1e6) {
        return invalid("oversampled rate must be at least 1 MHz");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(ModelBProfile::default().draw_taps(&mut rng, os_rate_hz))
}

/// Linear convolution, output length `x.len() + h.len() - 1`.
pub fn convolve(x: &[Complex64], h: &[Complex64]) -> Vec<Complex64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let mut out = vec![ZERO; x.len() + h.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        for (k, &hk) in h.iter().enumerate() {
            out[i + k] += xi * hk;
        }
    }
    out
}

fn convolve_real(x: &[Complex64], h: &[f64]) -> Vec<Complex64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let mut out = vec![ZERO; x.len() + h.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        for (k, &hk) in h.iter().enumerate() {
            out[i + k] += xi * hk;
        }
    }
    out
}

/// Circularly-symmetric complex Gaussian samples with variance `variance`.
pub fn complex_awgn<R: Rng + ?Sized>(rng: &mut R, len: usize, variance: f64) -> Vec<Complex64> {
    let s = (variance / 2.0).sqrt();
    (0..len)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * s, im * s)
        })
        .collect()
}

/// Multipath, CFO rotation, integer-grid delay, then AWGN.
///
/// The delay is applied before the noise so that the leading samples carry
/// noise like the rest of the stream.
pub fn apply_channel(sig: &ComplexSignal, cfg: &ChannelConfig) -> Result<ComplexSignal> {
    if sig.is_empty() {
        return invalid("cannot apply a channel to an empty signal");
    }
    cfg.validate()?;
    let rate = sig.sample_rate_hz;
    let mut y = convolve(&sig.samples, &cfg.taps);

    if cfg.cfo_hz != 0.0 {
        let w = 2.0 * std::f64::consts::PI * cfg.cfo_hz / rate;
        for (n, s) in y.iter_mut().enumerate() {
            *s *= Complex64::from_polar(1.0, w * n as f64);
        }
    }

    let reference = cfg.reference_power.unwrap_or_else(|| mean_power(&y));

    let delay = cfg.timing_offset_samples.round() as usize;
    if delay > 0 {
        let mut shifted = vec![ZERO; delay];
        shifted.extend_from_slice(&y);
        y = shifted;
    }

    if let Some(snr_db) = cfg.snr_db {
        let variance = reference / 10f64.powf(snr_db / 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let noise = complex_awgn(&mut rng, y.len(), variance);
        y.iter_mut().zip(noise).for_each(|(s, w)| *s += w);
    }
    Ok(ComplexSignal::new(y, rate))
}

/// SNR after the matched filter and decimation for a channel SNR set at the
/// oversampled rate: the filter keeps 1/`os_factor` of the noise bandwidth.
pub fn matched_filter_snr_db(channel_snr_db: f64, os_factor: usize) -> f64 {
    channel_snr_db + 10.0 * (os_factor as f64).log10()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RxFrontendConfig {
    /// Equal to the transmit filter taps.
    pub matched_taps: Vec<f64>,
    pub os_factor: usize,
    pub decimation_phase: usize,
}

impl RxFrontendConfig {
    pub fn matched_to(shape: &PulseShape, os_factor: usize) -> Result<Self> {
        Ok(Self {
            matched_taps: shape.taps(os_factor)?,
            os_factor,
            decimation_phase: 0,
        })
    }
}

/// Matched filter (taps scaled by 1/os for unit passband gain) and
/// decimation. Output sample `k` is taken at the cascade delay
/// `taps - 1` plus `decimation_phase + k·os`, which lines a clean loopback up
/// with the transmitted base-rate samples.
pub fn rx_frontend(sig: &ComplexSignal, cfg: &RxFrontendConfig) -> Result<ComplexSignal> {
    if cfg.os_factor == 0 {
        return invalid("os_factor must be at least 1");
    }
    if cfg.decimation_phase >= cfg.os_factor {
        return invalid("decimation_phase must be below os_factor");
    }
    if cfg.matched_taps.is_empty() {
        return invalid("matched filter has no taps");
    }
    let os = cfg.os_factor;
    let scaled: Vec<f64> = cfg.matched_taps.iter().map(|t| t / os as f64).collect();
    let delay = cfg.matched_taps.len() - 1;
    let filtered = convolve_real(&sig.samples, &scaled);
    let usable = sig.len().saturating_sub(delay + cfg.decimation_phase);
    let n_out = usable.div_ceil(os);
    let out = (0..n_out)
        .map(|k| filtered[delay + cfg.decimation_phase + k * os])
        .collect();
    Ok(ComplexSignal::new(out, sig.sample_rate_hz / os as f64))
}

/// Stochastic channel settings from which per-packet realizations are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Multipath {
    None,
    ModelB(ModelBProfile),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelTemplate {
    pub multipath: Multipath,
    /// CFO drawn uniformly from ±`cfo_max_hz`.
    pub cfo_max_hz: f64,
    /// Timing offset drawn uniformly from `[0, max)` oversampled samples.
    pub timing_offset_max: f64,
}

impl Default for ChannelTemplate {
    fn default() -> Self {
        Self {
            multipath: Multipath::ModelB(ModelBProfile::default()),
            cfo_max_hz: 18_000.0,
            timing_offset_max: 0.0,
        }
    }
}

impl ChannelTemplate {
    pub fn awgn_only() -> Self {
        Self {
            multipath: Multipath::None,
            cfo_max_hz: 0.0,
            timing_offset_max: 0.0,
        }
    }

    /// Draws taps, CFO and timing offset; the noise seed comes from `rng` too.
    pub fn realize<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        snr_db: Option<f64>,
        os_rate_hz: f64,
    ) -> ChannelConfig {
        let taps = match self.multipath {
            Multipath::None => vec![Complex64::new(1.0, 0.0)],
            Multipath::ModelB(profile) => profile.draw_taps(rng, os_rate_hz),
        };
        let cfo_hz = if self.cfo_max_hz > 0.0 {
            rng.random_range(-self.cfo_max_hz..=self.cfo_max_hz)
        } else {
            0.0
        };
        let timing_offset_samples = if self.timing_offset_max > 0.0 {
            rng.random_range(0.0..self.timing_offset_max)
        } else {
            0.0
        };
        ChannelConfig {
            taps,
            snr_db,
            cfo_hz,
            timing_offset_samples,
            seed: rng.random(),
            reference_power: None,
        }
    }
}
