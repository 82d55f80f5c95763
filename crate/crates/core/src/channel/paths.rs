//! Stochastic propagation-path parameters for the air-to-ground link.
//!
//! The array faces nadir, so the elevation angle θ of a path is its angle
//! from nadir and φ is its ground azimuth.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::pattern::wrap_angle;
use crate::config::{SystemConfig, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub theta: f64,
    pub phi: f64,
    pub gain: Complex64,
    pub delay_s: f64,
}

/// LoS path plus `L` NLoS paths for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub los: Path,
    pub nlos: Vec<Path>,
    pub rician_k_linear: f64,
    /// Free-space amplitude `λc / (4π d)` at the LoS slant distance.
    pub large_scale_gain: f64,
}

impl PathSet {
    pub fn nlos_power(&self) -> f64 {
        self.nlos.iter().map(|p| p.gain.norm_sqr()).sum()
    }
}

/// Draws one user's path set from the configured distributions.
pub fn sample_path_set<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> PathSet {
    let cos_max = cfg.max_nadir_offset_deg.to_radians().cos();
    // uniform over the spherical cap of the service cone
    let theta0 = rng.random_range(cos_max..=1.0f64).acos();
    let phi0 = wrap_angle(rng.random_range(-PI..PI));
    let distance = cfg.haps_altitude_m / theta0.cos();
    let tau0 = distance / SPEED_OF_LIGHT;
    let los = Path {
        theta: theta0,
        phi: phi0,
        gain: Complex64::from_polar(1.0, rng.random_range(-PI..PI)),
        delay_s: tau0,
    };

    let az = cfg.nlos_azimuth_spread_deg.to_radians();
    let el = cfg.nlos_elevation_spread_deg.to_radians();
    let mut nlos: Vec<Path> = (0..cfg.num_nlos_paths)
        .map(|_| {
            let theta = (theta0 + symmetric(rng, el)).clamp(0.0, PI / 2.0);
            let phi = wrap_angle(phi0 + symmetric(rng, az));
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            let excess = cfg.max_excess_delay_s * (1.0 - rng.random::<f64>());
            Path {
                theta,
                phi,
                gain: Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2,
                delay_s: tau0 + excess,
            }
        })
        .collect();
    let power: f64 = nlos.iter().map(|p| p.gain.norm_sqr()).sum();
    if power > 0.0 {
        let scale = power.sqrt().recip();
        for p in &mut nlos {
            p.gain *= scale;
        }
    }

    PathSet {
        los,
        nlos,
        rician_k_linear: cfg.rician_k_linear(),
        large_scale_gain: cfg.wavelength_m() / (4.0 * PI * distance),
    }
}

fn symmetric<R: Rng + ?Sized>(rng: &mut R, half_width: f64) -> f64 {
    if half_width == 0.0 {
        0.0
    } else {
        rng.random_range(-half_width..=half_width)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn no_nlos_paths() {
        let cfg = SystemConfig { num_nlos_paths: 0, ..SystemConfig::desk() };
        let ps = sample_path_set(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(ps.nlos.is_empty());
        assert_eq!(ps.nlos_power(), 0.0);
    }

    #[test]
    fn deterministic_for_a_seed() {
        let cfg = SystemConfig::desk();
        let a = sample_path_set(&cfg, &mut ChaCha8Rng::seed_from_u64(99));
        let b = sample_path_set(&cfg, &mut ChaCha8Rng::seed_from_u64(99));
        assert_eq!(a, b);
    }

    #[test]
    fn nlos_power_is_normalized_on_average() {
        let cfg = SystemConfig::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10_000;
        let mean = (0..n).map(|_| sample_path_set(&cfg, &mut rng).nlos_power()).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn geometry_ranges() {
        let cfg = SystemConfig::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let ps = sample_path_set(&cfg, &mut rng);
            assert!(ps.los.theta <= 60f64.to_radians() + 1e-12);
            assert!(ps.los.delay_s >= cfg.haps_altitude_m / SPEED_OF_LIGHT);
            for p in &ps.nlos {
                assert!(p.delay_s > ps.los.delay_s);
                assert!(p.delay_s - ps.los.delay_s <= cfg.max_excess_delay_s + 1e-18);
                assert!((0.0..=PI / 2.0).contains(&p.theta));
            }
            assert!((ps.los.gain.norm() - 1.0).abs() < 1e-12);
        }
    }
}
