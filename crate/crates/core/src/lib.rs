//! Packet-detection workbench.
//!
//! Synthesizes 1 MHz 802.11ah-style NDP preambles, pushes them through an
//! oversampled multipath/CFO/AWGN channel and a matched-filter front end, and
//! compares a sliding-autocorrelation detector with a small 1D-CNN regressor
//! trained from scratch. The [`flops`] module prices both detectors.

pub mod channel;
pub mod cnn;
pub mod corrsync;
pub mod dataset;
pub mod error;
pub mod flops;
pub mod nn;
pub mod preamble;
pub mod signal;
pub mod trials;

pub use corrsync::DetectionResult;
pub use error::{Error, Result};
pub use signal::ComplexSignal;

/// Format version stamped into every file this crate writes.
pub const FORMAT_VERSION: u32 = 1;
