//! Correlation-based packet detection.
//!
//! Coarse stage: the sliding autocorrelation Λ_τ between a window and its
//! copy `lag` samples later, normalized by the lagged-window energy P_τ,
//! gives the timing metric M(τ) = |Λ_τ|² / P_τ². A run of samples above the
//! trigger threshold opens a search region whose metric peak is refined by
//! averaging the two 90 % crossings. Fine stage: cross-correlation with the
//! known long training symbol at every LTS position of the preamble.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::preamble::{OfdmParams, PreambleLayout, PreambleSpec};
use crate::signal::ComplexSignal;

/// Presence flag, estimated start and the raw score at the decision point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub detected: bool,
    /// `-1` when nothing was detected.
    pub start_sample: i64,
    pub score: f64,
}

impl DetectionResult {
    pub fn not_detected(score: f64) -> Self {
        Self {
            detected: false,
            start_sample: -1,
            score,
        }
    }

    pub fn at(start_sample: usize, score: f64) -> Self {
        Self {
            detected: true,
            start_sample: start_sample as i64,
            score,
        }
    }
}

/// Which lag/window pair the coarse metric uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricVariant {
    /// Lag and window both L (half the STF).
    HalfStf,
    /// Lag l_S over a window of L_S − l_S samples.
    ShortLag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrDetectorConfig {
    pub variant: MetricVariant,
    /// L: correlation lag (and window length for [`MetricVariant::HalfStf`]).
    pub l_window: usize,
    /// l_S: STS length in samples.
    pub l_s: usize,
    /// L_S: STF length in samples.
    pub stf_len: usize,
    pub trigger_threshold: f64,
    /// Consecutive samples above threshold needed to open the search region.
    pub min_trigger_run: usize,
    pub plateau_fraction: f64,
    pub fine_search_span: usize,
    /// Offsets of the LTS copies relative to the packet start.
    pub lts_offsets: Vec<usize>,
}

impl Default for CorrDetectorConfig {
    fn default() -> Self {
        Self {
            variant: MetricVariant::HalfStf,
            l_window: 80,
            l_s: 16,
            stf_len: 160,
            trigger_threshold: 0.5,
            min_trigger_run: 8,
            plateau_fraction: 0.9,
            fine_search_span: 24,
            lts_offsets: vec![176, 208, 248, 288],
        }
    }
}

impl CorrDetectorConfig {
    /// Default detector with the LTS offsets taken from `spec`'s layout.
    pub fn for_preamble(spec: &PreambleSpec, params: &OfdmParams) -> Self {
        let layout = PreambleLayout::new(spec, params);
        Self {
            l_window: layout.stf_len / 2,
            l_s: 2 * params.n_subcarriers / 4,
            stf_len: layout.stf_len,
            lts_offsets: layout.lts_offsets,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l_window == 0 || self.l_s == 0 || self.stf_len <= self.l_s {
            return invalid("window lengths must be positive with stf_len > l_s");
        }
        if !(self.plateau_fraction > 0.0 && self.plateau_fraction < 1.0) {
            return invalid("plateau_fraction must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.trigger_threshold) {
            return invalid("trigger_threshold must lie in [0, 1]");
        }
        Ok(())
    }

    /// (lag, window) used by the coarse metric.
    pub fn lag_and_window(&self) -> (usize, usize) {
        match self.variant {
            MetricVariant::HalfStf => (self.l_window, self.l_window),
            MetricVariant::ShortLag => (self.l_s, self.stf_len - self.l_s),
        }
    }

    /// Length of the region searched for the peak once triggered.
    pub fn search_len(&self) -> usize {
        2 * self.stf_len
    }
}

fn check_window(y: &[Complex64], tau: usize, lag: usize, window: usize) -> Result<()> {
    if lag == 0 || window == 0 {
        return invalid("lag and window must be positive");
    }
    if tau + lag + window > y.len() {
        return invalid(format!(
            "window [{tau}, {}) exceeds signal of {} samples",
            tau + lag + window,
            y.len()
        ));
    }
    Ok(())
}

/// Λ_τ = Σ_{i<window} y*_{τ+i} y_{τ+i+lag}.
pub fn autocorr_windowed(y: &[Complex64], tau: usize, lag: usize, window: usize) -> Result<Complex64> {
    check_window(y, tau, lag, window)?;
    Ok((0..window)
        .map(|i| y[tau + i].conj() * y[tau + i + lag])
        .sum())
}

/// P_τ = Σ_{i<window} |y_{τ+i+lag}|², the energy of the lagged window.
pub fn window_power_windowed(y: &[Complex64], tau: usize, lag: usize, window: usize) -> Result<f64> {
    check_window(y, tau, lag, window)?;
    Ok((0..window).map(|i| y[tau + i + lag].norm_sqr()).sum())
}

/// Λ_τ with lag and window both `l`.
pub fn autocorr(y: &ComplexSignal, tau: usize, l: usize) -> Result<Complex64> {
    autocorr_windowed(&y.samples, tau, l, l)
}

pub fn window_power(y: &ComplexSignal, tau: usize, l: usize) -> Result<f64> {
    window_power_windowed(&y.samples, tau, l, l)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingMetric {
    pub value: f64,
    /// Set when P_τ = 0; `value` is then 0.
    pub degenerate: bool,
}

fn ratio(lambda: Complex64, power: f64) -> f64 {
    if power > 0.0 {
        lambda.norm_sqr() / (power * power)
    } else {
        0.0
    }
}

/// M(τ) = |Λ_τ|² / P_τ².
pub fn timing_metric(y: &ComplexSignal, tau: usize, l: usize) -> Result<TimingMetric> {
    let lambda = autocorr(y, tau, l)?;
    let power = window_power(y, tau, l)?;
    Ok(TimingMetric {
        value: ratio(lambda, power),
        degenerate: power <= 0.0,
    })
}

/// Running Λ_τ and P_τ updated by one sample per step.
#[derive(Debug, Clone)]
pub struct SlidingCorrelator<'a> {
    y: &'a [Complex64],
    lag: usize,
    window: usize,
    tau: usize,
    lambda: Complex64,
    power: f64,
}

impl<'a> SlidingCorrelator<'a> {
    pub fn new(y: &'a [Complex64], lag: usize, window: usize) -> Result<Self> {
        let lambda = autocorr_windowed(y, 0, lag, window)?;
        let power = window_power_windowed(y, 0, lag, window)?;
        Ok(Self {
            y,
            lag,
            window,
            tau: 0,
            lambda,
            power,
        })
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn lambda(&self) -> Complex64 {
        self.lambda
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn metric(&self) -> f64 {
        ratio(self.lambda, self.power)
    }

    /// Moves to τ + 1; returns false when the window would leave the signal.
    pub fn advance(&mut self) -> bool {
        let (t, lag, w) = (self.tau, self.lag, self.window);
        if t + 1 + lag + w > self.y.len() {
            return false;
        }
        let y = self.y;
        self.lambda += y[t + w].conj() * y[t + w + lag] - y[t].conj() * y[t + lag];
        self.power += y[t + w + lag].norm_sqr() - y[t + lag].norm_sqr();
        self.power = self.power.max(0.0);
        self.tau += 1;
        true
    }

    /// Recomputes both sums directly at the current τ.
    pub fn refresh(&mut self) {
        self.lambda = autocorr_windowed(self.y, self.tau, self.lag, self.window)
            .expect("window inside signal");
        self.power = window_power_windowed(self.y, self.tau, self.lag, self.window)
            .expect("window inside signal");
    }
}

const REFRESH_INTERVAL: usize = 4096;

/// M(τ) for every τ with a complete window; empty if the signal is too short.
pub fn metric_trace(y: &[Complex64], lag: usize, window: usize) -> Vec<f64> {
    let Ok(mut c) = SlidingCorrelator::new(y, lag, window) else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(y.len() + 1 - lag - window);
    out.push(c.metric());
    while c.advance() {
        if c.tau() % REFRESH_INTERVAL == 0 {
            c.refresh();
        }
        out.push(c.metric());
    }
    out
}

/// Writes `index,M` rows with a header.
pub fn write_metric_csv<W: Write>(trace: &[f64], mut w: W) -> std::io::Result<()> {
    writeln!(w, "index,M")?;
    for (i, m) in trace.iter().enumerate() {
        writeln!(w, "{i},{m}")?;
    }
    Ok(())
}

/// Midpoint of the first samples left and right of `peak` that fall below
/// `fraction · metric[peak]`; `peak` itself if either side never drops.
pub fn plateau_refine(metric: &[f64], peak: usize, fraction: f64) -> usize {
    if peak >= metric.len() {
        return peak;
    }
    let level = fraction * metric[peak];
    let left = (0..peak).rev().find(|&i| metric[i] < level);
    let right = (peak + 1..metric.len()).find(|&i| metric[i] < level);
    match (left, right) {
        (Some(l), Some(r)) => ((l + r) as f64 / 2.0).round() as usize,
        _ => peak,
    }
}

/// Threshold trigger, peak search and plateau refinement.
pub fn coarse_detect(y: &ComplexSignal, cfg: &CorrDetectorConfig) -> DetectionResult {
    let (lag, window) = cfg.lag_and_window();
    let trace = metric_trace(&y.samples, lag, window);
    coarse_from_trace(&trace, cfg)
}

pub fn coarse_from_trace(trace: &[f64], cfg: &CorrDetectorConfig) -> DetectionResult {
    let need = cfg.min_trigger_run.max(1);
    let mut run = 0;
    let mut trigger = None;
    for (i, &m) in trace.iter().enumerate() {
        if m > cfg.trigger_threshold {
            run += 1;
            if run == need {
                trigger = Some(i + 1 - need);
                break;
            }
        } else {
            run = 0;
        }
    }
    let Some(open) = trigger else {
        let best = trace.iter().copied().fold(0.0, f64::max);
        return DetectionResult::not_detected(best);
    };
    let close = (open + cfg.search_len()).min(trace.len());
    let mut peak = open;
    for i in open..close {
        if trace[i] > trace[peak] {
            peak = i;
        }
    }
    let start = plateau_refine(trace, peak, cfg.plateau_fraction);
    DetectionResult::at(start, trace[peak])
}

/// Refines `coarse` by matching `lts_ref` against every LTS copy.
///
/// Each candidate start `s` within ±`fine_search_span` of `coarse` scores
/// Σ_o |⟨lts_ref, y[s+o ..]⟩|² over the configured LTS offsets; the best
/// candidate wins. Falls back to `coarse` if no candidate fits in `y` or the
/// replica has no energy.
pub fn fine_detect(
    y: &ComplexSignal,
    coarse: usize,
    lts_ref: &ComplexSignal,
    cfg: &CorrDetectorConfig,
) -> usize {
    let r = &lts_ref.samples;
    if r.is_empty() || r.iter().all(|c| c.norm_sqr() == 0.0) || cfg.lts_offsets.is_empty() {
        return coarse;
    }
    let last_offset = *cfg.lts_offsets.iter().max().expect("non-empty");
    let lo = coarse.saturating_sub(cfg.fine_search_span);
    let hi = coarse + cfg.fine_search_span;
    let mut best: Option<(usize, f64)> = None;
    for s in lo..=hi {
        if s + last_offset + r.len() > y.len() {
            break;
        }
        let score: f64 = cfg
            .lts_offsets
            .iter()
            .map(|&o| {
                r.iter()
                    .zip(&y.samples[s + o..])
                    .map(|(a, b)| a.conj() * b)
                    .sum::<Complex64>()
                    .norm_sqr()
            })
            .sum();
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((s, score));
        }
    }
    best.map_or(coarse, |(s, _)| s)
}

/// Coarse + fine detector bound to a local LTS replica.
#[derive(Debug, Clone)]
pub struct CorrelationDetector {
    pub config: CorrDetectorConfig,
    pub lts_ref: ComplexSignal,
}

impl CorrelationDetector {
    pub fn new(config: CorrDetectorConfig, lts_ref: ComplexSignal) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, lts_ref })
    }

    pub fn for_preamble(spec: &PreambleSpec, params: &OfdmParams) -> Result<Self> {
        Self::new(
            CorrDetectorConfig::for_preamble(spec, params),
            crate::preamble::lts_reference(spec, params),
        )
    }

    pub fn detect_coarse(&self, y: &ComplexSignal) -> DetectionResult {
        coarse_detect(y, &self.config)
    }

    pub fn detect(&self, y: &ComplexSignal) -> DetectionResult {
        let coarse = self.detect_coarse(y);
        if !coarse.detected {
            return coarse;
        }
        let fine = fine_detect(y, coarse.start_sample as usize, &self.lts_ref, &self.config);
        DetectionResult::at(fine, coarse.score)
    }
}
