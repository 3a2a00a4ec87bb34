//! Arithmetic cost of both detectors.
//!
//! CNN layers follow the usual no-padding, stride-1 counts: a conv layer
//! with filter length F, ch_i inputs, ch_o filters and K output positions
//! costs F·ch_i·ch_o·K multiplies and F·(ch_i+1)·ch_o·K additions; a dense
//! layer costs N_i·N_o multiplies and (N_i+1)·N_o additions.
//!
//! Complex arithmetic on the correlator side is priced in real operations:
//! a complex multiply is 6 (4 mul + 2 add), a complex add is 2 and |z|² is 3
//! (2 mul + 1 add).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cnn::CnnDetectorConfig;
use crate::corrsync::CorrDetectorConfig;
use crate::error::{invalid, Result};

pub const CONVENTION: &str =
    "real FLOPs; complex mul = 6 (4 mul + 2 add), complex add = 2, |z|^2 = 3 (2 mul + 1 add)";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCost {
    pub muls: u64,
    pub adds: u64,
}

impl LayerCost {
    pub fn total(&self) -> u64 {
        self.muls + self.adds
    }
}

impl std::ops::Add for LayerCost {
    type Output = LayerCost;
    fn add(self, o: LayerCost) -> LayerCost {
        LayerCost {
            muls: self.muls + o.muls,
            adds: self.adds + o.adds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopsReport {
    pub convention: String,
    pub per_layer: Vec<(String, LayerCost)>,
    pub total_per_block: u64,
    pub blocks_per_second: f64,
    pub mflops: f64,
}

impl FlopsReport {
    fn from_layers(per_layer: Vec<(String, LayerCost)>, blocks_per_second: f64) -> Self {
        let total_per_block = per_layer.iter().map(|(_, c)| c.total()).sum();
        Self {
            convention: CONVENTION.into(),
            per_layer,
            total_per_block,
            blocks_per_second,
            mflops: total_per_block as f64 * blocks_per_second / 1e6,
        }
    }

    pub fn total(&self) -> LayerCost {
        self.per_layer
            .iter()
            .fold(LayerCost::default(), |acc, (_, c)| acc + *c)
    }

    /// `layer,muls,adds`, one row per layer plus a `total` row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "layer,muls,adds")?;
        for (name, c) in &self.per_layer {
            writeln!(w, "{name},{},{}", c.muls, c.adds)?;
        }
        let t = self.total();
        writeln!(w, "total,{},{}", t.muls, t.adds)
    }
}

pub fn conv1d_cost(f: usize, ch_i: usize, ch_o: usize, k: usize) -> Result<LayerCost> {
    if [f, ch_i, ch_o, k].contains(&0) {
        return invalid("conv cost arguments must be positive");
    }
    let (f, ch_i, ch_o, k) = (f as u64, ch_i as u64, ch_o as u64, k as u64);
    Ok(LayerCost {
        muls: f * ch_i * ch_o * k,
        adds: f * (ch_i + 1) * ch_o * k,
    })
}

pub fn fc_cost(n_i: usize, n_o: usize) -> Result<LayerCost> {
    if n_i == 0 || n_o == 0 {
        return invalid("fc cost arguments must be positive");
    }
    let (n_i, n_o) = (n_i as u64, n_o as u64);
    Ok(LayerCost {
        muls: n_i * n_o,
        adds: (n_i + 1) * n_o,
    })
}

/// CNN cost with non-overlapping blocks, so blocks/s = rate / B.
pub fn model_flops(cfg: &CnnDetectorConfig, sample_rate_hz: f64) -> Result<FlopsReport> {
    let d = cfg.dims()?;
    if !(sample_rate_hz >= 0.0) {
        return invalid("sample rate must be non-negative");
    }
    let layers = vec![
        (
            "conv1".to_string(),
            conv1d_cost(cfg.conv1_filter_len, cfg.in_channels, cfg.conv1_filters, d.conv1_width)?,
        ),
        (
            "conv2".to_string(),
            conv1d_cost(cfg.conv2_filter_len, cfg.conv1_filters, cfg.conv2_filters, d.conv2_width)?,
        ),
        ("fc".to_string(), fc_cost(d.flatten, d.fc)?),
        ("output".to_string(), fc_cost(d.fc, 1)?),
    ];
    Ok(FlopsReport::from_layers(layers, sample_rate_hz / cfg.block_len as f64))
}

/// Direct evaluation of Λ and P over a window of L for every new sample.
///
/// Λ: L complex products and L−1 complex adds. P: L magnitudes squared and
/// L−1 adds, counted at the complex rate as in the hand count. The metric
/// takes |Λ|², P² and one divide. Fine timing is left out.
pub fn conventional_flops(cfg: &CorrDetectorConfig, sample_rate_hz: f64) -> Result<FlopsReport> {
    cfg.validate()?;
    if !(sample_rate_hz >= 0.0) {
        return invalid("sample rate must be non-negative");
    }
    let (_, l) = cfg.lag_and_window();
    let l = l as u64;
    let layers = vec![
        (
            "correlation".to_string(),
            LayerCost {
                muls: 4 * l,
                adds: 2 * l + 2 * (l - 1),
            },
        ),
        (
            "power".to_string(),
            LayerCost {
                muls: 2 * l,
                adds: l + 2 * (l - 1),
            },
        ),
        ("metric".to_string(), LayerCost { muls: 4, adds: 1 }),
    ];
    Ok(FlopsReport::from_layers(layers, sample_rate_hz))
}

/// Running-sum variant: per sample one product enters and one leaves Λ, one
/// energy enters and one leaves P. Reported for context only.
pub fn conventional_flops_recursive(
    cfg: &CorrDetectorConfig,
    sample_rate_hz: f64,
) -> Result<FlopsReport> {
    cfg.validate()?;
    if !(sample_rate_hz >= 0.0) {
        return invalid("sample rate must be non-negative");
    }
    let layers = vec![
        ("correlation".to_string(), LayerCost { muls: 8, adds: 8 }),
        ("power".to_string(), LayerCost { muls: 4, adds: 4 }),
        ("metric".to_string(), LayerCost { muls: 4, adds: 1 }),
    ];
    Ok(FlopsReport::from_layers(layers, sample_rate_hz))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub detector: String,
    pub block_len: usize,
    pub flops_per_block: u64,
    pub blocks_per_second: f64,
    pub mflops: f64,
}

/// One CNN row per block length, then the conventional detector.
pub fn comparison(
    block_lens: &[usize],
    corr: &CorrDetectorConfig,
    sample_rate_hz: f64,
) -> Result<Vec<ComparisonRow>> {
    let mut rows = Vec::new();
    for &b in block_lens {
        let r = model_flops(&CnnDetectorConfig::new(b), sample_rate_hz)?;
        rows.push(ComparisonRow {
            detector: "cnn".into(),
            block_len: b,
            flops_per_block: r.total_per_block,
            blocks_per_second: r.blocks_per_second,
            mflops: r.mflops,
        });
    }
    let c = conventional_flops(corr, sample_rate_hz)?;
    rows.push(ComparisonRow {
        detector: "conventional".into(),
        block_len: corr.lag_and_window().1,
        flops_per_block: c.total_per_block,
        blocks_per_second: c.blocks_per_second,
        mflops: c.mflops,
    });
    Ok(rows)
}

pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "detector,block_len,flops_per_block,blocks_per_second,mflops")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.detector, r.block_len, r.flops_per_block, r.blocks_per_second, r.mflops
        )?;
    }
    Ok(())
}
