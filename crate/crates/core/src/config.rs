//! System-level configuration shared by the channel generator, the solvers,
//! and the network.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Physical and stochastic parameters of one HAPS downlink scenario.
///
/// Transmit power is kept in dBm here because this is the file-facing type;
/// solvers receive a [`LinkBudget`] in watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub num_antennas: usize,
    pub num_rf_chains: usize,
    pub num_users: usize,
    pub num_subcarriers: usize,
    pub num_patterns: usize,
    pub bandwidth_hz: f64,
    pub carrier_freq_hz: f64,
    pub noise_density_dbm_per_hz: f64,
    pub transmit_power_dbm: f64,
    pub upa_rows: usize,
    pub upa_cols: usize,
    pub element_spacing_wavelengths: f64,
    pub rician_k_db: f64,
    pub num_nlos_paths: usize,
    pub haps_altitude_m: f64,
    pub rng_seed: u64,
    /// Largest angle between nadir and a user's line of sight.
    pub max_nadir_offset_deg: f64,
    /// NLoS azimuth offsets are uniform in `±nlos_azimuth_spread_deg`.
    pub nlos_azimuth_spread_deg: f64,
    /// NLoS elevation offsets are uniform in `±nlos_elevation_spread_deg`.
    pub nlos_elevation_spread_deg: f64,
    /// NLoS excess delays are uniform in `(0, max_excess_delay_s]`.
    pub max_excess_delay_s: f64,
    /// Azimuth cosine-power exponent shared by every codebook lobe.
    pub pattern_azimuth_exponent: f64,
    /// Elevation sine-power exponent shared by every codebook mode.
    pub pattern_elevation_exponent: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl SystemConfig {
    /// Full-size array and waveform used in the reference simulations.
    pub fn paper() -> Self {
        Self {
            num_antennas: 32,
            num_rf_chains: 8,
            num_users: 4,
            num_subcarriers: 60,
            upa_rows: 4,
            upa_cols: 8,
            ..Self::desk()
        }
    }

    /// Small configuration that trains on a single CPU core.
    pub fn desk() -> Self {
        Self {
            num_antennas: 8,
            num_rf_chains: 4,
            num_users: 2,
            num_subcarriers: 8,
            num_patterns: 4,
            bandwidth_hz: 7.2e6,
            carrier_freq_hz: 2.0e9,
            noise_density_dbm_per_hz: -174.0,
            transmit_power_dbm: 40.0,
            upa_rows: 2,
            upa_cols: 4,
            element_spacing_wavelengths: 0.5,
            rician_k_db: 10.0,
            num_nlos_paths: 4,
            haps_altitude_m: 20_000.0,
            rng_seed: 0,
            max_nadir_offset_deg: 60.0,
            nlos_azimuth_spread_deg: 15.0,
            nlos_elevation_spread_deg: 5.0,
            max_excess_delay_s: 1.0e-6,
            pattern_azimuth_exponent: 4.0,
            pattern_elevation_exponent: 1.0,
        }
    }

    /// A UPA of `rows × cols` elements; every other field keeps its value.
    pub fn with_array(mut self, rows: usize, cols: usize, rf_chains: usize) -> Self {
        self.upa_rows = rows;
        self.upa_cols = cols;
        self.num_antennas = rows * cols;
        self.num_rf_chains = rf_chains;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.num_antennas == 0
            || self.num_rf_chains == 0
            || self.num_users == 0
            || self.num_subcarriers == 0
        {
            return fail("num_antennas, num_rf_chains, num_users and num_subcarriers must be positive".into());
        }
        if self.num_patterns == 0 {
            return fail("num_patterns must be at least 1".into());
        }
        if self.upa_rows * self.upa_cols != self.num_antennas {
            return fail(format!(
                "num_antennas = {} but upa_rows × upa_cols = {} × {}",
                self.num_antennas, self.upa_rows, self.upa_cols
            ));
        }
        if self.num_antennas % self.num_rf_chains != 0 {
            return fail(format!(
                "num_rf_chains = {} does not divide num_antennas = {}",
                self.num_rf_chains, self.num_antennas
            ));
        }
        if self.num_users > self.num_rf_chains {
            return fail(format!(
                "num_users = {} exceeds num_rf_chains = {}",
                self.num_users, self.num_rf_chains
            ));
        }
        let positive = [
            ("bandwidth_hz", self.bandwidth_hz),
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("element_spacing_wavelengths", self.element_spacing_wavelengths),
            ("haps_altitude_m", self.haps_altitude_m),
            ("max_excess_delay_s", self.max_excess_delay_s),
            ("pattern_azimuth_exponent", self.pattern_azimuth_exponent),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{key} must be a positive finite number, got {v}"));
            }
        }
        let non_negative = [
            ("max_nadir_offset_deg", self.max_nadir_offset_deg),
            ("nlos_azimuth_spread_deg", self.nlos_azimuth_spread_deg),
            ("nlos_elevation_spread_deg", self.nlos_elevation_spread_deg),
            ("pattern_elevation_exponent", self.pattern_elevation_exponent),
        ];
        for (key, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return fail(format!("{key} must be a non-negative finite number, got {v}"));
            }
        }
        if self.max_nadir_offset_deg >= 90.0 {
            return fail("max_nadir_offset_deg must be below 90".into());
        }
        for (key, v) in [
            ("noise_density_dbm_per_hz", self.noise_density_dbm_per_hz),
            ("transmit_power_dbm", self.transmit_power_dbm),
            ("rician_k_db", self.rician_k_db),
        ] {
            if !v.is_finite() {
                return fail(format!("{key} must be finite"));
            }
        }
        Ok(())
    }

    pub fn subarray_size(&self) -> usize {
        self.num_antennas / self.num_rf_chains
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }

    pub fn rician_k_linear(&self) -> f64 {
        10f64.powf(self.rician_k_db / 10.0)
    }

    /// Centered baseband offsets `f_g = (g - (Nc + 1) / 2) · Bw / Nc` for `g = 1..=Nc`.
    pub fn subcarrier_freqs(&self) -> Vec<f64> {
        let nc = self.num_subcarriers as f64;
        (1..=self.num_subcarriers)
            .map(|g| (g as f64 - (nc + 1.0) / 2.0) * self.bandwidth_hz / nc)
            .collect()
    }

    pub fn link_budget(&self) -> LinkBudget {
        LinkBudget {
            pt_watts: dbm_to_watts(self.transmit_power_dbm),
            sigma2: crate::precoding::noise_power(
                self.noise_density_dbm_per_hz,
                self.bandwidth_hz,
                self.num_subcarriers,
            ),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("SystemConfig always serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Transmit budget and per-subcarrier noise in linear units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub pt_watts: f64,
    pub sigma2: f64,
}

impl LinkBudget {
    pub fn new(pt_watts: f64, sigma2: f64) -> Result<Self> {
        if !(pt_watts.is_finite() && pt_watts > 0.0) {
            return Err(Error::Config(format!("transmit power must be positive, got {pt_watts} W")));
        }
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::Config(format!("noise power must be positive, got {sigma2} W")));
        }
        Ok(Self { pt_watts, sigma2 })
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}
