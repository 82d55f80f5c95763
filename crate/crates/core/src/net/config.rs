use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::EncoderConfig;

/// Architecture of the joint pattern/beamforming network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrHbfNetConfig {
    /// Pattern-selection encoder (one token per antenna).
    pub pattern_encoder: EncoderConfig,
    /// Analog-refinement encoder (one token per RF chain).
    pub analog_encoder: EncoderConfig,
    /// Digital-refinement encoder (one token per subcarrier).
    pub digital_encoder: EncoderConfig,
    /// Subcarriers fed to the token features; 0 picks the largest divisor
    /// of the subcarrier count that is at most 8.
    pub pilot_subcarriers: usize,
    /// Temperature of the softmax surrogate used by the straight-through
    /// pattern gradient.
    pub ste_temperature: f64,
    pub init_seed: u64,
}

impl Default for PrHbfNetConfig {
    fn default() -> Self {
        Self {
            pattern_encoder: EncoderConfig::default(),
            analog_encoder: EncoderConfig::default(),
            digital_encoder: EncoderConfig::default(),
            pilot_subcarriers: 0,
            ste_temperature: 1.0,
            init_seed: 0,
        }
    }
}

impl PrHbfNetConfig {
    /// Same width and depth for all three encoders.
    pub fn uniform(encoder: EncoderConfig) -> Self {
        Self { pattern_encoder: encoder, analog_encoder: encoder, digital_encoder: encoder, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.pattern_encoder.validate()?;
        self.analog_encoder.validate()?;
        self.digital_encoder.validate()?;
        if !(self.ste_temperature > 0.0) || !self.ste_temperature.is_finite() {
            return Err(Error::Config(format!("ste_temperature must be positive, got {}", self.ste_temperature)));
        }
        Ok(())
    }
}

/// Optimization schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub peak_lr: f64,
    pub warmup_steps: u64,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    /// Train the pattern encoder first with the refinement heads frozen,
    /// then the refinement encoders with the pattern encoder frozen.
    pub stagewise: bool,
    /// Draw a random user order and a random common phase per user for
    /// every training sample. Both leave the achievable SE unchanged.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { batch_size: 64, epochs: 50, peak_lr: 1e-3, warmup_steps: 200, seed: 0, stagewise: false, augment: true }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.peak_lr > 0.0) || !self.peak_lr.is_finite() {
            return Err(Error::Config(format!("peak_lr must be positive, got {}", self.peak_lr)));
        }
        Ok(())
    }
}

/// Largest divisor of `num_subcarriers` not exceeding 8.
pub fn default_pilot_count(num_subcarriers: usize) -> usize {
    (1..=num_subcarriers.min(8)).rev().find(|p| num_subcarriers % p == 0).unwrap_or(1)
}

/// Evenly strided subcarrier subset of size `count`.
pub fn pilot_indices(num_subcarriers: usize, count: usize) -> Result<Vec<usize>> {
    let count = if count == 0 { default_pilot_count(num_subcarriers) } else { count };
    if count > num_subcarriers || num_subcarriers % count != 0 {
        return Err(Error::Config(format!(
            "pilot_subcarriers {count} must divide the {num_subcarriers} subcarriers"
        )));
    }
    let stride = num_subcarriers / count;
    Ok((0..count).map(|i| i * stride).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pilot_defaults() {
        assert_eq!(default_pilot_count(8), 8);
        assert_eq!(default_pilot_count(60), 6);
        assert_eq!(default_pilot_count(7), 7);
        assert_eq!(default_pilot_count(11), 1);
        assert_eq!(pilot_indices(8, 4).unwrap(), vec![0, 2, 4, 6]);
        assert_eq!(pilot_indices(60, 0).unwrap(), vec![0, 10, 20, 30, 40, 50]);
        assert!(pilot_indices(8, 3).is_err());
    }

    #[test]
    fn validation() {
        assert!(PrHbfNetConfig::default().validate().is_ok());
        let bad = PrHbfNetConfig { ste_temperature: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
    }
}
