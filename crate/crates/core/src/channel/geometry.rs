use std::f64::consts::PI;

use num_complex::Complex64;

use super::pattern::PatternCodebook;
use crate::config::{SystemConfig, SPEED_OF_LIGHT};
use crate::error::{Error, Result};

/// Element coordinates of the transmit array, in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    positions: Vec<[f64; 3]>,
}

impl ArrayGeometry {
    pub fn from_positions(positions: Vec<[f64; 3]>) -> Self {
        Self { positions }
    }

    /// Uniform planar array in the xy-plane, row-major element order
    /// (element `m = row · cols + col` sits at `(col · d, row · d, 0)`).
    pub fn upa(rows: usize, cols: usize, spacing_m: f64) -> Self {
        let positions = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| [c as f64 * spacing_m, r as f64 * spacing_m, 0.0]))
            .collect();
        Self { positions }
    }

    pub fn from_config(cfg: &SystemConfig) -> Self {
        Self::upa(
            cfg.upa_rows,
            cfg.upa_cols,
            cfg.element_spacing_wavelengths * cfg.wavelength_m(),
        )
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    /// Geometric phase factors `exp(−j (2π/λ) kᵀ p_m)` for every element.
    pub fn phase_factors(&self, theta: f64, phi: f64, wavelength_m: f64) -> Vec<Complex64> {
        let k = unit_wave_vector(theta, phi);
        let wavenumber = 2.0 * PI / wavelength_m;
        self.positions
            .iter()
            .map(|p| Complex64::from_polar(1.0, -wavenumber * (k[0] * p[0] + k[1] * p[1] + k[2] * p[2])))
            .collect()
    }
}

pub fn unit_wave_vector(theta: f64, phi: f64) -> [f64; 3] {
    [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
}

/// Per-antenna discrete mode selection `c ∈ 𝓜^{Nt}` (1-based modes).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatternVector(Vec<usize>);

impl PatternVector {
    pub fn new(modes: Vec<usize>, num_patterns: usize) -> Result<Self> {
        if let Some((m, &bad)) = modes.iter().enumerate().find(|(_, &c)| c == 0 || c > num_patterns) {
            return Err(Error::Domain(format!(
                "antenna {m} selects mode {bad}, outside 1..={num_patterns}"
            )));
        }
        Ok(Self(modes))
    }

    /// Every antenna in the same mode.
    pub fn uniform(num_antennas: usize, mode: usize) -> Self {
        Self(vec![mode; num_antennas])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn modes(&self) -> &[usize] {
        &self.0
    }

    /// Zero-based mode index of antenna `m`.
    pub fn index(&self, m: usize) -> usize {
        self.0[m] - 1
    }

    pub fn with_mode(&self, antenna: usize, mode: usize) -> Self {
        let mut v = self.0.clone();
        v[antenna] = mode;
        Self(v)
    }

    pub fn is_valid_for(&self, num_antennas: usize, num_patterns: usize) -> bool {
        self.0.len() == num_antennas && self.0.iter().all(|&c| (1..=num_patterns).contains(&c))
    }
}

/// `[a(θ, φ, c)]_m = G_{c_m}(θ, φ) · exp(−j (2π/λc) kᵀ p_m)`.
pub fn steering_vector(
    geom: &ArrayGeometry,
    codebook: &PatternCodebook,
    c: &PatternVector,
    theta: f64,
    phi: f64,
    fc: f64,
) -> Result<Vec<Complex64>> {
    if c.len() != geom.len() {
        return Err(Error::Shape(format!(
            "pattern vector has {} entries for {} antennas",
            c.len(),
            geom.len()
        )));
    }
    let phases = geom.phase_factors(theta, phi, SPEED_OF_LIGHT / fc);
    c.modes()
        .iter()
        .zip(phases)
        .map(|(&mode, phase)| Ok(codebook.mode(mode)?.gain(theta, phi) * phase))
        .collect()
}
