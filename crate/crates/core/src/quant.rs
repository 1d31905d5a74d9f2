//! Uniform quantization of analog control values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Precision of the ring drivers.
///
/// A value in a closed interval `[lo, hi]` is snapped to the nearest of
/// `2^bits` levels spread uniformly from `lo` to `hi` inclusive. Ties round
/// away from zero in level-index space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantSpec {
    pub bits: u8,
    pub enabled: bool,
}

impl Default for QuantSpec {
    fn default() -> Self {
        QuantSpec { bits: 7, enabled: true }
    }
}

impl QuantSpec {
    pub const MAX_BITS: u8 = 16;

    pub fn new(bits: u8) -> Result<Self> {
        let spec = QuantSpec { bits, enabled: true };
        spec.validate()?;
        Ok(spec)
    }

    /// Infinite precision.
    pub fn off() -> Self {
        QuantSpec {
            bits: 7,
            enabled: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=Self::MAX_BITS).contains(&self.bits) {
            return Err(Error::config(format!(
                "quantization bits {} must lie in 1..={}",
                self.bits,
                Self::MAX_BITS
            )));
        }
        Ok(())
    }

    pub fn levels(&self) -> u32 {
        1u32 << self.bits
    }

    /// Spacing between adjacent levels on `[lo, hi]`.
    pub fn step(&self, lo: f64, hi: f64) -> f64 {
        (hi - lo) / f64::from(self.levels() - 1)
    }

    /// Snap `value` onto the grid over `[lo, hi]`. Values outside the interval
    /// saturate at its ends. Identity when disabled.
    pub fn quantize(&self, value: f64, lo: f64, hi: f64) -> f64 {
        if !self.enabled {
            return value;
        }
        let step = self.step(lo, hi);
        let index = ((value.clamp(lo, hi) - lo) / step).round();
        if index >= f64::from(self.levels() - 1) {
            hi
        } else {
            lo + index * step
        }
    }

    /// Envelopes live on `[0, 1]`.
    pub fn quantize_unit(&self, value: f64) -> f64 {
        self.quantize(value, 0.0, 1.0)
    }

    /// Normalized weights live on `[-1, 1]`.
    pub fn quantize_signed(&self, value: f64) -> f64 {
        self.quantize(value, -1.0, 1.0)
    }
}
