//! Stream trials for the correlation detector.
//!
//! Unlike the CNN, the correlator runs over a whole received stream: some
//! leading noise, the NDP and a noise tail. Half the trials carry a packet,
//! the rest are noise only and score false alarms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cnn::{Metrics, Truth};
use crate::corrsync::{CorrelationDetector, DetectionResult};
use crate::dataset::Simulator;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamTrialConfig {
    pub n_packets: usize,
    pub n_noise: usize,
    /// SNR drawn uniformly from `[lo, hi]`; equal ends fix it.
    pub snr_range_db: [f64; 2],
    /// Leading noise drawn uniformly from `[0, lead_max)`.
    pub lead_max: usize,
    pub tail: usize,
    pub seed: u64,
}

impl Default for StreamTrialConfig {
    fn default() -> Self {
        Self {
            n_packets: 1000,
            n_noise: 1000,
            snr_range_db: [0.0, 25.0],
            lead_max: 400,
            tail: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub truth: Truth,
    pub detection: DetectionResult,
    pub coarse: DetectionResult,
}

/// Runs every trial on its own ChaCha8 stream; packets first, then noise.
pub fn run_stream_trials(
    sim: &Simulator,
    detector: &CorrelationDetector,
    cfg: &StreamTrialConfig,
) -> Result<Vec<TrialOutcome>> {
    let [lo, hi] = cfg.snr_range_db;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return invalid("snr range must be finite with lo <= hi");
    }
    if cfg.lead_max == 0 {
        return invalid("lead_max must be at least 1");
    }
    let total = cfg.n_packets + cfg.n_noise;
    let len = cfg.lead_max + sim.preamble.len() + cfg.tail;
    (0..total)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let snr = if hi > lo { rng.random_range(lo..hi) } else { lo };
            let lead = rng.random_range(0..cfg.lead_max);
            let tx_start = (i < cfg.n_packets).then_some(lead);
            let s = sim.stream(&mut rng, Some(snr), tx_start, len)?;
            Ok(TrialOutcome {
                truth: Truth {
                    start: s.onset.map(|o| o as f64),
                    snr_db: snr,
                },
                detection: detector.detect(&s.samples),
                coarse: detector.detect_coarse(&s.samples),
            })
        })
        .collect()
}

pub fn trial_metrics(outcomes: &[TrialOutcome]) -> Result<Metrics> {
    let truth: Vec<Truth> = outcomes.iter().map(|o| o.truth).collect();
    let dets: Vec<DetectionResult> = outcomes.iter().map(|o| o.detection).collect();
    Metrics::from_truth(&truth, &dets)
}

/// Fraction of packet trials whose estimate lands within `tol` samples.
pub fn fraction_within(outcomes: &[TrialOutcome], tol: i64) -> f64 {
    let packets: Vec<&TrialOutcome> = outcomes.iter().filter(|o| o.truth.start.is_some()).collect();
    if packets.is_empty() {
        return 0.0;
    }
    let hits = packets
        .iter()
        .filter(|o| {
            o.detection.detected
                && (o.detection.start_sample - o.truth.start.expect("packet") as i64).abs() <= tol
        })
        .count();
    hits as f64 / packets.len() as f64
}
