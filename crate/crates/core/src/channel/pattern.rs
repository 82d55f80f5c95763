//! Discrete radiation-pattern codebook of a reconfigurable pixel antenna.
//!
//! Each mode is a parametric cosine-power azimuth lobe (or the pointwise max
//! of several lobes) times a sine-power elevation taper. The amplitude
//! constant is chosen so that every mode radiates the same total power as an
//! isotropic element: `(1/4π) ∮ |G|² sinθ dθ dφ = 1`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Peak azimuths (degrees) of the four standard modes.
pub const STANDARD_PEAKS_DEG: [&[f64]; 4] = [&[0.0], &[30.0], &[56.0, -56.0], &[-30.0]];

#[derive(Debug, Clone, PartialEq)]
pub struct PatternMode {
    /// One entry per lobe; a dual-lobe mode has two.
    pub peak_azimuths_deg: Vec<f64>,
    pub azimuth_exponent: f64,
    pub elevation_exponent: f64,
    pub normalization: f64,
    /// Constant phase applied to the gain. Zero for the default codebook.
    pub phase_rad: f64,
}

impl PatternMode {
    /// Builds a mode and solves for its equal-power normalization constant.
    pub fn new(peak_azimuths_deg: Vec<f64>, azimuth_exponent: f64, elevation_exponent: f64) -> Result<Self> {
        if peak_azimuths_deg.is_empty() {
            return Err(Error::Config("a pattern mode needs at least one lobe".into()));
        }
        if !(azimuth_exponent > 0.0) || !(elevation_exponent >= 0.0) {
            return Err(Error::Config(format!(
                "pattern exponents must satisfy q > 0, p >= 0 (got q = {azimuth_exponent}, p = {elevation_exponent})"
            )));
        }
        let mut mode = Self {
            peak_azimuths_deg,
            azimuth_exponent,
            elevation_exponent,
            normalization: 1.0,
            phase_rad: 0.0,
        };
        let azimuth = simpson(-PI, PI, 1 << 14, |phi| mode.azimuth_shape(phi).powi(2));
        let elevation = simpson(0.0, PI, 1 << 12, |theta| {
            theta.sin().powf(2.0 * elevation_exponent + 1.0)
        });
        mode.normalization = (4.0 * PI / (azimuth * elevation)).sqrt();
        Ok(mode)
    }

    fn azimuth_shape(&self, phi: f64) -> f64 {
        self.peak_azimuths_deg
            .iter()
            .map(|peak| {
                let delta = wrap_angle(phi - peak.to_radians());
                if delta.abs() > PI {
                    0.0
                } else {
                    (delta / 2.0).cos().max(0.0).powf(self.azimuth_exponent)
                }
            })
            .fold(0.0, f64::max)
    }

    /// Real amplitude `|G(θ, φ)|`.
    pub fn amplitude(&self, theta: f64, phi: f64) -> f64 {
        let elevation = theta.sin().max(0.0).powf(self.elevation_exponent);
        self.normalization * self.azimuth_shape(phi) * elevation
    }

    pub fn gain(&self, theta: f64, phi: f64) -> Complex64 {
        Complex64::from_polar(self.amplitude(theta, phi), self.phase_rad)
    }
}

/// The codebook `𝓜 = {1, …, M}`. Mode indices in the public API are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternCodebook {
    modes: Vec<PatternMode>,
}

impl PatternCodebook {
    pub fn new(modes: Vec<PatternMode>) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::Config("pattern codebook must contain at least one mode".into()));
        }
        Ok(Self { modes })
    }

    /// The first `num_modes` standard modes (peaks at 0°, 30°, ±56°, −30°).
    pub fn standard(num_modes: usize, azimuth_exponent: f64, elevation_exponent: f64) -> Result<Self> {
        if num_modes == 0 || num_modes > STANDARD_PEAKS_DEG.len() {
            return Err(Error::Config(format!(
                "the standard codebook has 1..={} modes, requested {num_modes}",
                STANDARD_PEAKS_DEG.len()
            )));
        }
        let modes = STANDARD_PEAKS_DEG[..num_modes]
            .iter()
            .map(|peaks| PatternMode::new(peaks.to_vec(), azimuth_exponent, elevation_exponent))
            .collect::<Result<Vec<_>>>()?;
        Self::new(modes)
    }

    pub fn from_config(cfg: &crate::config::SystemConfig) -> Result<Self> {
        Self::standard(
            cfg.num_patterns,
            cfg.pattern_azimuth_exponent,
            cfg.pattern_elevation_exponent,
        )
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[PatternMode] {
        &self.modes
    }

    /// Mode by 1-based index.
    pub fn mode(&self, mode: usize) -> Result<&PatternMode> {
        if mode == 0 || mode > self.modes.len() {
            return Err(Error::Domain(format!(
                "pattern mode {mode} outside 1..={}",
                self.modes.len()
            )));
        }
        Ok(&self.modes[mode - 1])
    }

    /// Enables the complex-gain hook: mode `mode` gets a constant phase.
    pub fn set_mode_phase(&mut self, mode: usize, phase_rad: f64) -> Result<()> {
        self.mode(mode)?;
        self.modes[mode - 1].phase_rad = phase_rad;
        Ok(())
    }
}

/// `G_mode(θ, φ)` for a 1-based mode index.
pub fn pattern_gain(codebook: &PatternCodebook, mode: usize, theta: f64, phi: f64) -> Result<Complex64> {
    Ok(codebook.mode(mode)?.gain(theta, phi))
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = a.rem_euclid(2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    }
    x
}

fn simpson(a: f64, b: f64, intervals: usize, f: impl Fn(f64) -> f64) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn codebook() -> PatternCodebook {
        PatternCodebook::standard(4, 4.0, 1.0).unwrap()
    }

    /// Independent 2-D midpoint grid over the sphere (not separable).
    fn sphere_power(mode: &PatternMode, n_theta: usize, n_phi: usize) -> f64 {
        let (dt, dp) = (PI / n_theta as f64, 2.0 * PI / n_phi as f64);
        let mut acc = 0.0;
        for i in 0..n_theta {
            let theta = (i as f64 + 0.5) * dt;
            for j in 0..n_phi {
                let phi = -PI + (j as f64 + 0.5) * dp;
                acc += mode.gain(theta, phi).norm_sqr() * theta.sin() * dt * dp;
            }
        }
        acc / (4.0 * PI)
    }

    #[test]
    fn peak_of_single_lobe_mode() {
        let cb = codebook();
        let g = pattern_gain(&cb, 1, PI / 2.0, 0.0).unwrap();
        assert!((g.re - cb.mode(1).unwrap().normalization).abs() < 1e-12);
        assert_eq!(g.im, 0.0);
    }

    #[test]
    fn dual_lobe_mode_is_symmetric() {
        let cb = codebook();
        let a = pattern_gain(&cb, 3, PI / 2.0, 56f64.to_radians()).unwrap();
        let b = pattern_gain(&cb, 3, PI / 2.0, -56f64.to_radians()).unwrap();
        assert!((a - b).norm() < 1e-12);
        assert!((a.re - cb.mode(3).unwrap().normalization).abs() < 1e-12);
    }

    #[test]
    fn every_mode_radiates_unit_power() {
        for mode in codebook().modes() {
            let p = sphere_power(mode, 200, 400);
            assert!((p - 1.0).abs() < 0.01, "power {p}");
        }
        for (q, p) in [(1.0, 0.0), (8.0, 2.0), (2.5, 0.5)] {
            for mode in PatternCodebook::standard(4, q, p).unwrap().modes() {
                let power = sphere_power(mode, 200, 400);
                assert!((power - 1.0).abs() < 0.01, "q={q} p={p}: {power}");
            }
        }
    }

    #[test]
    fn out_of_range_mode_is_domain_error() {
        let cb = codebook();
        assert!(matches!(pattern_gain(&cb, 0, 0.3, 0.1), Err(Error::Domain(_))));
        assert!(matches!(pattern_gain(&cb, 5, 0.3, 0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn gains_are_non_negative_and_back_lobe_vanishes() {
        let cb = codebook();
        let g = pattern_gain(&cb, 1, PI / 2.0, PI).unwrap();
        assert!(g.re.abs() < 1e-12);
        for i in 0..50 {
            let phi = -PI + i as f64 * 0.125;
            for m in 1..=4 {
                assert!(pattern_gain(&cb, m, 1.0, phi).unwrap().re >= 0.0);
            }
        }
    }

    #[test]
    fn phase_hook_only_rotates() {
        let mut cb = codebook();
        let before = pattern_gain(&cb, 2, 1.1, 0.4).unwrap();
        cb.set_mode_phase(2, 0.7).unwrap();
        let after = pattern_gain(&cb, 2, 1.1, 0.4).unwrap();
        assert!((before.norm() - after.norm()).abs() < 1e-15);
        assert!((after.arg() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.5) - 0.5).abs() < 1e-15);
    }
}
