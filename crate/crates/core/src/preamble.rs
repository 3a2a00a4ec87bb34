//! 1 MHz NDP preamble synthesis and transmit pulse shaping.
//!
//! Subcarrier vectors use FFT ordering: index `k` in `0..N` carries bin `k`
//! for `k < N/2` and bin `k - N` otherwise.
//!
//! Preamble layout at 1 MHz (N = 32, CP = 8):
//!
//! | samples    | content                                              |
//! |------------|------------------------------------------------------|
//! | `0..160`   | STF, cyclic extension of one 32-sample IDFT          |
//! | `160..176` | double guard interval (last 16 LTS samples)          |
//! | `176..240` | LTS, LTS                                             |
//! | `240..320` | CP + LTS, CP + LTS                                   |
//! | `320..360` | SIG placeholder symbol                               |
//! | `360..560` | five LTF2 placeholder symbols                        |

use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::signal::ComplexSignal;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Seed used for the low-PAPR LTS sign search of the default spec.
pub const DEFAULT_LTF_SEED: u64 = 0x11a4_0001;
/// Seed for the SIG and LTF2 placeholder BPSK bins of the default spec.
pub const DEFAULT_FILLER_SEED: u64 = 0x11a4_0002;
/// Number of random sign patterns tried in the LTS search.
pub const LTF_SEARCH_CANDIDATES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfdmParams {
    pub n_subcarriers: usize,
    pub subcarrier_spacing_hz: f64,
    pub cp_duration_us: f64,
    pub symbol_duration_us: f64,
    pub base_sample_rate_hz: f64,
}

impl Default for OfdmParams {
    fn default() -> Self {
        Self {
            n_subcarriers: 32,
            subcarrier_spacing_hz: 31_250.0,
            cp_duration_us: 8.0,
            symbol_duration_us: 40.0,
            base_sample_rate_hz: 1_000_000.0,
        }
    }
}

impl OfdmParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_subcarriers == 0 {
            return invalid("n_subcarriers must be positive");
        }
        let rate = self.n_subcarriers as f64 * self.subcarrier_spacing_hz;
        if (rate - self.base_sample_rate_hz).abs() > 1e-6 * self.base_sample_rate_hz {
            return invalid(format!(
                "base rate {} Hz != N * spacing = {} Hz",
                self.base_sample_rate_hz, rate
            ));
        }
        let body_us = self.n_subcarriers as f64 / (self.base_sample_rate_hz / 1e6);
        if (self.cp_duration_us + body_us - self.symbol_duration_us).abs() > 1e-9 {
            return invalid("symbol duration must equal CP + N samples");
        }
        if self.cp_len() > self.n_subcarriers {
            return invalid("cyclic prefix longer than the symbol body");
        }
        Ok(())
    }

    /// Cyclic-prefix length in base-rate samples.
    pub fn cp_len(&self) -> usize {
        (self.cp_duration_us * self.base_sample_rate_hz / 1e6).round() as usize
    }

    /// Full OFDM symbol length (CP + body) in base-rate samples.
    pub fn symbol_len(&self) -> usize {
        self.cp_len() + self.n_subcarriers
    }
}

/// Frequency-domain content of each preamble field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreambleSpec {
    pub n: usize,
    pub stf_freq: Vec<Complex64>,
    pub ltf_freq: Vec<Complex64>,
    pub sig_freq: Vec<Complex64>,
    pub ltf2_freq: Vec<Complex64>,
    #[serde(default = "default_stf_symbols")]
    pub n_stf_symbols: usize,
    #[serde(default = "default_ltf1_symbols")]
    pub n_ltf1_symbols: usize,
    #[serde(default = "default_ltf2_symbols")]
    pub n_ltf2_symbols: usize,
}

fn default_stf_symbols() -> usize {
    4
}
fn default_ltf1_symbols() -> usize {
    4
}
fn default_ltf2_symbols() -> usize {
    5
}

/// Signed bin index for FFT-ordered position `k`.
fn signed_bin(k: usize, n: usize) -> i64 {
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

fn bin_index(bin: i64, n: usize) -> usize {
    bin.rem_euclid(n as i64) as usize
}

/// The occupied bins ±1..±13 of the 1 MHz mode.
fn occupied_bins() -> impl Iterator<Item = i64> {
    (-13..=13).filter(|&b| b != 0)
}

impl PreambleSpec {
    /// Synthetic stand-in for the standard sequences.
    ///
    /// STF: QPSK points on bins ±4, ±8, ±12 (exhaustive min-PAPR search over
    /// all 4^6 phase patterns), scaled to the LTF power. LTF: ±1 on ±1..±13
    /// picked by a seeded min-PAPR search. SIG/LTF2: seeded BPSK.
    pub fn synthetic_default() -> Self {
        let n = 32;
        let mut fft = FftPlanner::new();
        let ifft = fft.plan_fft_inverse(n);

        let stf_bins = [-12i64, -8, -4, 4, 8, 12];
        let qpsk = [
            Complex64::new(1.0, 1.0),
            Complex64::new(-1.0, 1.0),
            Complex64::new(-1.0, -1.0),
            Complex64::new(1.0, -1.0),
        ];
        let stf_scale = (26.0f64 / 6.0).sqrt() / 2f64.sqrt();
        let mut best_stf = (f64::INFINITY, vec![ZERO; n]);
        for pattern in 0..4usize.pow(stf_bins.len() as u32) {
            let mut freq = vec![ZERO; n];
            let mut p = pattern;
            for &b in &stf_bins {
                freq[bin_index(b, n)] = qpsk[p % 4] * stf_scale;
                p /= 4;
            }
            let papr = papr(&idft_with(&ifft, &freq));
            if papr < best_stf.0 - 1e-12 {
                best_stf = (papr, freq);
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_LTF_SEED);
        let mut best_ltf = (f64::INFINITY, vec![ZERO; n]);
        for _ in 0..LTF_SEARCH_CANDIDATES {
            let freq = random_bpsk(&mut rng, n);
            let papr = papr(&idft_with(&ifft, &freq));
            if papr < best_ltf.0 - 1e-12 {
                best_ltf = (papr, freq);
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_FILLER_SEED);
        let sig_freq = random_bpsk(&mut rng, n);
        let ltf2_freq = random_bpsk(&mut rng, n);

        Self {
            n,
            stf_freq: best_stf.1,
            ltf_freq: best_ltf.1,
            sig_freq,
            ltf2_freq,
            n_stf_symbols: 4,
            n_ltf1_symbols: 4,
            n_ltf2_symbols: 5,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: Self = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("stf_freq", &self.stf_freq),
            ("ltf_freq", &self.ltf_freq),
            ("sig_freq", &self.sig_freq),
            ("ltf2_freq", &self.ltf2_freq),
        ] {
            if v.len() != self.n {
                return invalid(format!("{name} has {} bins, expected {}", v.len(), self.n));
            }
            if v.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                return invalid(format!("{name} contains non-finite values"));
            }
        }
        // Even bins only: the 32-sample IDFT then repeats every 16 samples.
        for (k, c) in self.stf_freq.iter().enumerate() {
            if c.norm_sqr() > 0.0 && signed_bin(k, self.n).rem_euclid(2) != 0 {
                return invalid(format!(
                    "stf_freq populates odd bin {}; STS periodicity needs even bins",
                    signed_bin(k, self.n)
                ));
            }
        }
        if self.stf_freq.iter().all(|c| c.norm_sqr() == 0.0) {
            return invalid("stf_freq is empty");
        }
        if self.n_ltf1_symbols < 2 {
            return invalid("LTF1 needs at least two symbols");
        }
        Ok(())
    }
}

fn random_bpsk(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    let mut freq = vec![ZERO; n];
    for b in occupied_bins() {
        let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
        freq[bin_index(b, n)] = Complex64::new(s, 0.0);
    }
    freq
}

fn papr(samples: &[Complex64]) -> f64 {
    let peak = samples.iter().map(|s| s.norm_sqr()).fold(0.0, f64::max);
    peak / crate::signal::mean_power(samples)
}

fn idft_with(ifft: &Arc<dyn Fft<f64>>, freq: &[Complex64]) -> Vec<Complex64> {
    let mut buf = freq.to_vec();
    ifft.process(&mut buf);
    let scale = 1.0 / (freq.len() as f64).sqrt();
    buf.iter_mut().for_each(|s| *s *= scale);
    buf
}

/// Unitary inverse DFT (scaled by 1/√N).
pub fn idft(freq: &[Complex64]) -> Vec<Complex64> {
    let ifft = FftPlanner::new().plan_fft_inverse(freq.len());
    idft_with(&ifft, freq)
}

/// One OFDM symbol: cyclic prefix followed by the unitary IDFT of `freq`.
pub fn ofdm_symbol(freq: &[Complex64], params: &OfdmParams) -> Result<ComplexSignal> {
    params.validate()?;
    if freq.len() != params.n_subcarriers {
        return invalid(format!(
            "expected {} subcarriers, got {}",
            params.n_subcarriers,
            freq.len()
        ));
    }
    let body = idft(freq);
    let cp = params.cp_len();
    let mut samples = Vec::with_capacity(cp + body.len());
    samples.extend_from_slice(&body[body.len() - cp..]);
    samples.extend_from_slice(&body);
    Ok(ComplexSignal::new(samples, params.base_sample_rate_hz))
}

/// Sample offsets of the preamble fields, all at the base rate.
#[derive(Debug, Clone, PartialEq)]
pub struct PreambleLayout {
    pub stf_len: usize,
    pub ltf1_start: usize,
    pub ltf1_len: usize,
    /// Start of every full LTS copy inside LTF1.
    pub lts_offsets: Vec<usize>,
    pub lts_len: usize,
    pub sig_start: usize,
    pub ltf2_start: usize,
    pub total_len: usize,
}

impl PreambleLayout {
    pub fn new(spec: &PreambleSpec, params: &OfdmParams) -> Self {
        let sym = params.symbol_len();
        let cp = params.cp_len();
        let n = params.n_subcarriers;
        let stf_len = spec.n_stf_symbols * sym;
        let ltf1_start = stf_len;
        let dgi = 2 * cp;
        let mut lts_offsets = vec![ltf1_start + dgi, ltf1_start + dgi + n];
        let mut pos = ltf1_start + dgi + 2 * n;
        for _ in 2..spec.n_ltf1_symbols {
            lts_offsets.push(pos + cp);
            pos += sym;
        }
        let ltf1_len = spec.n_ltf1_symbols * sym;
        let sig_start = ltf1_start + ltf1_len;
        let ltf2_start = sig_start + sym;
        Self {
            stf_len,
            ltf1_start,
            ltf1_len,
            lts_offsets,
            lts_len: n,
            sig_start,
            ltf2_start,
            total_len: ltf2_start + spec.n_ltf2_symbols * sym,
        }
    }
}

/// Fixed ±1 scrambling of placeholder symbol `index`; symbol 0 is unscrambled.
fn filler_signs(index: usize, n: usize) -> Vec<f64> {
    if index == 0 {
        return vec![1.0; n];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_FILLER_SEED ^ ((index as u64) << 32));
    (0..n)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect()
}

/// Time-domain preamble at the base rate.
pub fn build_preamble(spec: &PreambleSpec, params: &OfdmParams) -> Result<ComplexSignal> {
    params.validate()?;
    spec.validate()?;
    if spec.n != params.n_subcarriers {
        return invalid("spec and OFDM params disagree on N");
    }
    let layout = PreambleLayout::new(spec, params);
    let n = params.n_subcarriers;
    let cp = params.cp_len();
    let mut out = Vec::with_capacity(layout.total_len);

    // STF: the CP-prefixed symbol extended cyclically, so the STS period
    // carries across symbol boundaries.
    let stf = idft(&spec.stf_freq);
    out.extend((0..layout.stf_len).map(|i| stf[(i + n - cp) % n]));

    let lts = idft(&spec.ltf_freq);
    out.extend_from_slice(&lts[n - 2 * cp..]);
    out.extend_from_slice(&lts);
    out.extend_from_slice(&lts);
    for _ in 2..spec.n_ltf1_symbols {
        out.extend_from_slice(&lts[n - cp..]);
        out.extend_from_slice(&lts);
    }

    out.extend(ofdm_symbol(&spec.sig_freq, params)?.samples);
    for k in 0..spec.n_ltf2_symbols {
        let signs = filler_signs(k, n);
        let freq: Vec<Complex64> = spec
            .ltf2_freq
            .iter()
            .zip(&signs)
            .map(|(&c, &s)| c * s)
            .collect();
        out.extend(ofdm_symbol(&freq, params)?.samples);
    }
    debug_assert_eq!(out.len(), layout.total_len);
    Ok(ComplexSignal::new(out, params.base_sample_rate_hz))
}

/// A single long training symbol (no guard), the local replica for fine timing.
pub fn lts_reference(spec: &PreambleSpec, params: &OfdmParams) -> ComplexSignal {
    ComplexSignal::new(idft(&spec.ltf_freq), params.base_sample_rate_hz)
}

/// Transmit pulse shape. Taps are normalized for an `os`-fold interpolator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PulseShape {
    RootRaisedCosine { n_taps: usize, rolloff: f64 },
    WindowedSinc { n_taps: usize },
}

impl Default for PulseShape {
    fn default() -> Self {
        PulseShape::RootRaisedCosine {
            n_taps: 49,
            rolloff: 0.5,
        }
    }
}

impl PulseShape {
    pub fn taps(&self, os_factor: usize) -> Result<Vec<f64>> {
        match *self {
            PulseShape::RootRaisedCosine { n_taps, rolloff } => {
                root_raised_cosine_taps(n_taps, rolloff, os_factor)
            }
            PulseShape::WindowedSinc { n_taps } => windowed_sinc_taps(n_taps, os_factor),
        }
    }
}

/// Hamming-windowed sinc low-pass with cutoff at the base-rate Nyquist
/// frequency (0.5/os cycles per oversampled sample); taps sum to `os_factor`.
pub fn windowed_sinc_taps(n_taps: usize, os_factor: usize) -> Result<Vec<f64>> {
    if n_taps == 0 || os_factor == 0 {
        return invalid("n_taps and os_factor must be positive");
    }
    let fc = 0.5 / os_factor as f64;
    let mid = (n_taps as f64 - 1.0) / 2.0;
    let mut taps: Vec<f64> = (0..n_taps)
        .map(|i| {
            let t = i as f64 - mid;
            let window = if n_taps == 1 {
                1.0
            } else {
                0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n_taps as f64 - 1.0)).cos()
            };
            2.0 * fc * sinc(2.0 * fc * t) * window
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t *= os_factor as f64 / sum);
    Ok(taps)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Root-raised-cosine taps spanning `n_taps` oversampled samples, scaled so
/// that Σh² = os. The transmit/receive cascade is then a raised cosine with
/// unit gain at the base-rate sampling instants.
pub fn root_raised_cosine_taps(n_taps: usize, rolloff: f64, os_factor: usize) -> Result<Vec<f64>> {
    if n_taps == 0 || os_factor == 0 {
        return invalid("n_taps and os_factor must be positive");
    }
    if !(0.0..=1.0).contains(&rolloff) || rolloff == 0.0 {
        return invalid("rolloff must lie in (0, 1]");
    }
    use std::f64::consts::PI;
    let b = rolloff;
    let mid = (n_taps as f64 - 1.0) / 2.0;
    let mut taps: Vec<f64> = (0..n_taps)
        .map(|i| {
            let t = (i as f64 - mid) / os_factor as f64;
            if t.abs() < 1e-12 {
                1.0 - b + 4.0 * b / PI
            } else if ((4.0 * b * t).abs() - 1.0).abs() < 1e-9 {
                b / 2f64.sqrt()
                    * ((1.0 + 2.0 / PI) * (PI / (4.0 * b)).sin()
                        + (1.0 - 2.0 / PI) * (PI / (4.0 * b)).cos())
            } else {
                ((PI * t * (1.0 - b)).sin() + 4.0 * b * t * (PI * t * (1.0 + b)).cos())
                    / (PI * t * (1.0 - (4.0 * b * t).powi(2)))
            }
        })
        .collect();
    let energy: f64 = taps.iter().map(|t| t * t).sum();
    let scale = (os_factor as f64 / energy).sqrt();
    taps.iter_mut().for_each(|t| *t *= scale);
    Ok(taps)
}

/// Group delay of a linear-phase FIR, in samples of its own rate.
pub fn group_delay(taps: &[f64]) -> f64 {
    (taps.len() as f64 - 1.0) / 2.0
}

/// Zero-stuff by `os_factor` and filter with `filter_taps` (full convolution).
///
/// Output length is `len * os_factor + taps - 1`; the filter's
/// [`group_delay`] is left in the stream for the receiver to remove.
pub fn upsample_filter(
    sig: &ComplexSignal,
    os_factor: usize,
    filter_taps: &[f64],
) -> Result<ComplexSignal> {
    if os_factor == 0 {
        return invalid("os_factor must be at least 1");
    }
    if filter_taps.is_empty() {
        return invalid("filter_taps is empty");
    }
    let out_len = sig.len() * os_factor + filter_taps.len() - 1;
    let mut out = vec![ZERO; out_len];
    for (i, &x) in sig.samples.iter().enumerate() {
        let base = i * os_factor;
        for (k, &h) in filter_taps.iter().enumerate() {
            out[base + k] += x * h;
        }
    }
    Ok(ComplexSignal::new(out, sig.sample_rate_hz * os_factor as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> OfdmParams {
        OfdmParams::default()
    }

    #[test]
    fn default_params_are_consistent() {
        let p = params();
        p.validate().unwrap();
        assert_eq!(p.cp_len(), 8);
        assert_eq!(p.symbol_len(), 40);
    }

    #[test]
    fn zero_symbol_is_zero() {
        let s = ofdm_symbol(&[ZERO; 32], &params()).unwrap();
        assert_eq!(s.len(), 40);
        assert!(s.samples.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn dc_bin_gives_constant() {
        let mut f = vec![ZERO; 32];
        f[0] = Complex64::new(1.0, 0.0);
        let s = ofdm_symbol(&f, &params()).unwrap();
        let expect = 1.0 / 32f64.sqrt();
        for c in &s.samples {
            assert!((c.re - expect).abs() < 1e-15 && c.im.abs() < 1e-15);
        }
    }

    #[test]
    fn wrong_length_rejected() {
        assert!(ofdm_symbol(&[ZERO; 31], &params()).is_err());
    }

    #[test]
    fn cp_copies_tail() {
        let spec = PreambleSpec::synthetic_default();
        let s = ofdm_symbol(&spec.ltf_freq, &params()).unwrap();
        for i in 0..8 {
            assert_eq!(s.samples[i], s.samples[32 + i]);
        }
    }

    #[test]
    fn layout_offsets() {
        let spec = PreambleSpec::synthetic_default();
        let l = PreambleLayout::new(&spec, &params());
        assert_eq!(l.stf_len, 160);
        assert_eq!(l.ltf1_start, 160);
        assert_eq!(l.lts_offsets, vec![176, 208, 248, 288]);
        assert_eq!(l.sig_start, 320);
        assert_eq!(l.ltf2_start, 360);
        assert_eq!(l.total_len, 560);
    }

    #[test]
    fn preamble_length_and_stf_period() {
        let spec = PreambleSpec::synthetic_default();
        let s = build_preamble(&spec, &params()).unwrap();
        assert_eq!(s.len(), 560);
        assert_eq!(s.sample_rate_hz, 1e6);
        let err = (0..144)
            .map(|n| (s.samples[n] - s.samples[n + 16]).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn ltf1_repetition_structure() {
        let spec = PreambleSpec::synthetic_default();
        let s = build_preamble(&spec, &params()).unwrap();
        // the last two LTF1 symbols are identical CP + LTS
        for n in 240..280 {
            assert!((s.samples[n] - s.samples[n + 40]).norm() < 1e-12, "n={n}");
        }
        // DGI + two LTS is 32-periodic
        for n in 160..208 {
            assert!((s.samples[n] - s.samples[n + 32]).norm() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn lts_reference_matches_ltf_copies() {
        let spec = PreambleSpec::synthetic_default();
        let p = params();
        let s = build_preamble(&spec, &p).unwrap();
        let lts = lts_reference(&spec, &p);
        for &off in &PreambleLayout::new(&spec, &p).lts_offsets {
            for i in 0..32 {
                assert!((s.samples[off + i] - lts.samples[i]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn stf_and_ltf_power_match() {
        let spec = PreambleSpec::synthetic_default();
        let s = build_preamble(&spec, &params()).unwrap();
        let stf = crate::signal::mean_power(&s.samples[..160]);
        let ltf = crate::signal::mean_power(&s.samples[176..240]);
        assert!((stf - ltf).abs() / ltf < 1e-9, "{stf} {ltf}");
    }

    #[test]
    fn odd_stf_bin_rejected() {
        let mut spec = PreambleSpec::synthetic_default();
        spec.stf_freq[3] = Complex64::new(1.0, 0.0);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn shipped_default_spec_matches_generator() {
        let shipped: PreambleSpec =
            serde_json::from_str(include_str!("../data/preamble_default.json")).unwrap();
        assert_eq!(shipped, PreambleSpec::synthetic_default());
    }

    #[test]
    fn upsample_identity() {
        let spec = PreambleSpec::synthetic_default();
        let s = build_preamble(&spec, &params()).unwrap();
        let u = upsample_filter(&s, 1, &[1.0]).unwrap();
        assert_eq!(u.samples, s.samples);
    }

    #[test]
    fn upsample_impulse_returns_taps() {
        let mut x = vec![ZERO; 3];
        x[0] = Complex64::new(1.0, 0.0);
        let taps = windowed_sinc_taps(48, 4).unwrap();
        let u = upsample_filter(&ComplexSignal::new(x, 1e6), 4, &taps).unwrap();
        assert_eq!(u.len(), 3 * 4 + 47);
        assert_eq!(u.sample_rate_hz, 4e6);
        for (k, &t) in taps.iter().enumerate() {
            assert_eq!(u.samples[k], Complex64::new(t, 0.0));
        }
        assert!(u.samples[48..].iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn upsample_rejects_zero_factor() {
        let s = ComplexSignal::zeros(4, 1e6);
        assert!(upsample_filter(&s, 0, &[1.0]).is_err());
    }

    #[test]
    fn windowed_sinc_dc_gain() {
        let taps = windowed_sinc_taps(48, 4).unwrap();
        let x = ComplexSignal::new(vec![Complex64::new(0.7, -0.2); 200], 1e6);
        let u = upsample_filter(&x, 4, &taps).unwrap();
        let amp = x.samples[0].norm();
        for c in &u.samples[100..700] {
            assert!((c.norm() - amp).abs() / amp < 0.01);
        }
    }

    #[test]
    fn rrc_cascade_is_nyquist() {
        let os = 4;
        let h = root_raised_cosine_taps(49, 0.5, os).unwrap();
        // cascade sampled at multiples of os around its centre
        let n = h.len();
        let cascade: Vec<f64> = (0..2 * n - 1)
            .map(|m| {
                (0..n)
                    .filter(|&k| m >= k && m - k < n)
                    .map(|k| h[k] * h[m - k] / os as f64)
                    .sum()
            })
            .collect();
        let centre = n - 1;
        assert!((cascade[centre] - 1.0).abs() < 1e-12);
        for j in 1..=5 {
            assert!(cascade[centre + j * os].abs() < 5e-3, "j={j}");
        }
    }
}
