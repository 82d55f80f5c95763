//! Sub-connected hybrid precoders, the power budget, and SINR / sum-SE
//! evaluation.

use num_complex::Complex64;

use crate::channel::PatternVector;
use crate::error::{Error, Result};
use crate::CMatrix;

/// Contiguous assignment of antennas to RF chains: antenna `m` is driven by
/// chain `m / N_s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubarrayMapping {
    rf_of_antenna: Vec<usize>,
    num_rf_chains: usize,
}

impl SubarrayMapping {
    pub fn new(num_antennas: usize, num_rf_chains: usize) -> Result<Self> {
        if num_rf_chains == 0 || num_antennas % num_rf_chains != 0 {
            return Err(Error::Config(format!(
                "{num_rf_chains} RF chains cannot evenly drive {num_antennas} antennas"
            )));
        }
        let ns = num_antennas / num_rf_chains;
        Ok(Self {
            rf_of_antenna: (0..num_antennas).map(|m| m / ns).collect(),
            num_rf_chains,
        })
    }

    pub fn num_antennas(&self) -> usize {
        self.rf_of_antenna.len()
    }

    pub fn num_rf_chains(&self) -> usize {
        self.num_rf_chains
    }

    pub fn subarray_size(&self) -> usize {
        self.num_antennas() / self.num_rf_chains
    }

    pub fn rf_of(&self, antenna: usize) -> usize {
        self.rf_of_antenna[antenna]
    }

    /// Antenna indices driven by chain `r`.
    pub fn antennas_of(&self, r: usize) -> std::ops::Range<usize> {
        let ns = self.subarray_size();
        r * ns..(r + 1) * ns
    }
}

/// Phase-shifter settings of a sub-connected analog precoder.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogPrecoder {
    phases: Vec<f64>,
    mapping: SubarrayMapping,
}

impl AnalogPrecoder {
    pub fn new(phases: Vec<f64>, mapping: SubarrayMapping) -> Result<Self> {
        if phases.len() != mapping.num_antennas() {
            return Err(Error::Shape(format!(
                "{} phases for {} antennas",
                phases.len(),
                mapping.num_antennas()
            )));
        }
        Ok(Self { phases, mapping })
    }

    pub fn zero(mapping: SubarrayMapping) -> Self {
        Self { phases: vec![0.0; mapping.num_antennas()], mapping }
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn mapping(&self) -> &SubarrayMapping {
        &self.mapping
    }

    /// `F_RF` (`Nt × N_RF`), block diagonal with unit-modulus support.
    pub fn matrix(&self) -> CMatrix {
        let mut f = CMatrix::zeros(self.mapping.num_antennas(), self.mapping.num_rf_chains());
        for (m, &phase) in self.phases.iter().enumerate() {
            f[(m, self.mapping.rf_of(m))] = Complex64::from_polar(1.0, phase);
        }
        f
    }
}

/// Per-subcarrier baseband precoders `F_BB,g` (`N_RF × K`).
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalPrecoderSet {
    per_subcarrier: Vec<CMatrix>,
}

impl DigitalPrecoderSet {
    pub fn new(per_subcarrier: Vec<CMatrix>) -> Result<Self> {
        if let Some(first) = per_subcarrier.first() {
            if per_subcarrier.iter().any(|f| f.shape() != first.shape()) {
                return Err(Error::Shape("digital precoders differ in shape across subcarriers".into()));
            }
        }
        Ok(Self { per_subcarrier })
    }

    pub fn matrices(&self) -> &[CMatrix] {
        &self.per_subcarrier
    }

    pub fn len(&self) -> usize {
        self.per_subcarrier.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_subcarrier.is_empty()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            per_subcarrier: self.per_subcarrier.iter().map(|f| f * Complex64::new(s, 0.0)).collect(),
        }
    }
}

/// Decision variables together with the sum SE they achieve.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingSolution {
    pub pattern: PatternVector,
    pub analog: AnalogPrecoder,
    pub digital: DigitalPrecoderSet,
    /// bits/s/Hz
    pub achieved_se: f64,
}

/// Per-subcarrier noise power in watts over the subcarrier spacing `Bw / Nc`.
pub fn noise_power(noise_density_dbm_per_hz: f64, bandwidth_hz: f64, num_subcarriers: usize) -> f64 {
    let spacing = bandwidth_hz / num_subcarriers as f64;
    10f64.powf((noise_density_dbm_per_hz + 10.0 * spacing.log10() - 30.0) / 10.0)
}

/// Support / modulus violation of an analog precoder at `(antenna, chain)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalogViolation {
    OutsideSupport { antenna: usize, chain: usize, modulus: f64 },
    NonUnitModulus { antenna: usize, chain: usize, modulus: f64 },
}

/// Checks `F_RF ∈ 𝓐_sub`: non-zeros exactly on the block-diagonal support
/// with moduli within `1e-9` of one.
pub fn validate_analog(f_rf: &CMatrix, mapping: &SubarrayMapping) -> Result<(), Vec<AnalogViolation>> {
    const TOL: f64 = 1e-9;
    if f_rf.shape() != (mapping.num_antennas(), mapping.num_rf_chains()) {
        return Err(vec![]);
    }
    let mut report = Vec::new();
    for m in 0..f_rf.nrows() {
        for r in 0..f_rf.ncols() {
            let modulus = f_rf[(m, r)].norm();
            if r == mapping.rf_of(m) {
                if (modulus - 1.0).abs() > TOL || !modulus.is_finite() {
                    report.push(AnalogViolation::NonUnitModulus { antenna: m, chain: r, modulus });
                }
            } else if modulus != 0.0 {
                report.push(AnalogViolation::OutsideSupport { antenna: m, chain: r, modulus });
            }
        }
    }
    if report.is_empty() {
        Ok(())
    } else {
        Err(report)
    }
}

/// `(1/Nc) Σ_g ‖F_RF F_BB,g‖_F²`.
pub fn average_transmit_power(analog: &AnalogPrecoder, digital: &DigitalPrecoderSet) -> f64 {
    let f_rf = analog.matrix();
    let total: f64 = digital.matrices().iter().map(|f| (&f_rf * f).norm_squared()).sum();
    total / digital.len().max(1) as f64
}

/// Rescales every `F_BB,g` by one common factor so the average power budget
/// holds with equality.
pub fn normalize_power(
    digital: &DigitalPrecoderSet,
    analog: &AnalogPrecoder,
    pt_watts: f64,
) -> Result<DigitalPrecoderSet> {
    let power = average_transmit_power(analog, digital);
    if !(power > 0.0) || !power.is_finite() {
        return Err(Error::Degenerate(format!(
            "digital precoders carry power {power}; cannot rescale to the budget"
        )));
    }
    Ok(digital.scaled((pt_watts / power).sqrt()))
}

/// `γ_{u,g}` for user `u` given `H_g` (`K × Nt`), `F_RF`, and `F_BB,g`.
pub fn sinr(h_g: &CMatrix, f_rf: &CMatrix, f_bb_g: &CMatrix, sigma2: f64, u: usize) -> Result<f64> {
    check_sigma2(sigma2)?;
    if u >= h_g.nrows() {
        return Err(Error::Domain(format!("user {u} out of range 0..{}", h_g.nrows())));
    }
    let row = h_g.row(u) * f_rf;
    let y = row * f_bb_g;
    Ok(sinr_from_row(y.as_slice(), u, sigma2))
}

/// Average sum spectral efficiency `(1/Nc) Σ_g Σ_u log2(1 + γ_{u,g})`.
pub fn sum_se(channels: &[CMatrix], analog: &AnalogPrecoder, digital: &DigitalPrecoderSet, sigma2: f64) -> Result<f64> {
    check_sigma2(sigma2)?;
    sum_se_unchecked(channels, &analog.matrix(), digital.matrices(), sigma2)
}

pub(crate) fn sum_se_unchecked(channels: &[CMatrix], f_rf: &CMatrix, f_bb: &[CMatrix], sigma2: f64) -> Result<f64> {
    if channels.len() != f_bb.len() || channels.is_empty() {
        return Err(Error::Shape(format!(
            "{} channel matrices but {} digital precoders",
            channels.len(),
            f_bb.len()
        )));
    }
    let mut acc = 0.0;
    for (h, f) in channels.iter().zip(f_bb) {
        if h.ncols() != f_rf.nrows() || f.nrows() != f_rf.ncols() || f.ncols() != h.nrows() {
            return Err(Error::Shape(format!(
                "H {:?}, F_RF {:?}, F_BB {:?} are incompatible",
                h.shape(),
                f_rf.shape(),
                f.shape()
            )));
        }
        let y = h * f_rf * f;
        for u in 0..h.nrows() {
            let row: Vec<Complex64> = y.row(u).iter().copied().collect();
            acc += sinr_from_row(&row, u, sigma2).ln_1p();
        }
    }
    Ok(acc / std::f64::consts::LN_2 / channels.len() as f64)
}

/// `row[k] = h_u^H F_RF f_k`; returns 0 when signal and noise both vanish.
fn sinr_from_row(row: &[Complex64], u: usize, sigma2: f64) -> f64 {
    let signal = row[u].norm_sqr();
    let interference: f64 = row.iter().enumerate().filter(|&(k, _)| k != u).map(|(_, z)| z.norm_sqr()).sum();
    let denom = interference + sigma2;
    if signal == 0.0 {
        0.0
    } else {
        signal / denom
    }
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::Domain(format!("noise power must be positive, got {sigma2}")));
    }
    Ok(())
}
