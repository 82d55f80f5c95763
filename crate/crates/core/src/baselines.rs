//! Model-driven precoder anchors and classical pattern-selection solvers.
//!
//! [`hbf_solve`] turns a fixed pattern into a feasible hybrid precoder via a
//! subarray-wise dominant-eigenvector analog stage and a regularized
//! zero-forcing digital stage. The pattern searches (greedy, exhaustive,
//! random, fixed) all score candidates with it.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{apply_pattern, EmCsiTensor, PatternVector};
use crate::config::{LinkBudget, SystemConfig};
use crate::error::{Error, Result};
use crate::precoding::{normalize_power, sum_se, AnalogPrecoder, BeamformingSolution, DigitalPrecoderSet, SubarrayMapping};
use crate::CMatrix;

/// Everything a solver needs besides the channel.
#[derive(Debug, Clone, PartialEq)]
pub struct HbfContext {
    pub mapping: SubarrayMapping,
    pub budget: LinkBudget,
}

impl HbfContext {
    pub fn new(mapping: SubarrayMapping, budget: LinkBudget) -> Self {
        Self { mapping, budget }
    }

    pub fn from_config(cfg: &SystemConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            mapping: SubarrayMapping::new(cfg.num_antennas, cfg.num_rf_chains)?,
            budget: cfg.link_budget(),
        })
    }

    pub fn with_pt_watts(&self, pt_watts: f64) -> Self {
        Self {
            mapping: self.mapping.clone(),
            budget: LinkBudget { pt_watts, ..self.budget },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyConfig {
    pub max_sweeps: usize,
    /// A sweep that improves the SE by less than this ends the search.
    pub improvement_tol: f64,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        Self { max_sweeps: 2, improvement_tol: 1e-6 }
    }
}

impl GreedyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_sweeps == 0 || !(self.improvement_tol > 0.0) {
            return Err(Error::Config("greedy search needs max_sweeps >= 1 and a positive tolerance".into()));
        }
        Ok(())
    }
}

/// Analog anchor plus the chains whose subarray channel was numerically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogInit {
    pub analog: AnalogPrecoder,
    pub zero_subarrays: Vec<usize>,
}

/// Phase-only projection of each subarray's dominant eigenvector of
/// `Σ_g H_g[:, r]^H H_g[:, r]`, with the first element's phase set to zero.
pub fn svd_analog_init(channels: &[CMatrix], mapping: &SubarrayMapping) -> Result<AnalogInit> {
    if channels.is_empty() {
        return Err(Error::Shape("no channel matrices".into()));
    }
    let ns = mapping.subarray_size();
    let mut phases = vec![0.0; mapping.num_antennas()];
    let mut zero_subarrays = Vec::new();
    for r in 0..mapping.num_rf_chains() {
        let cols = mapping.antennas_of(r);
        let mut gram = CMatrix::zeros(ns, ns);
        for h in channels {
            let block = h.columns(cols.start, ns);
            gram += block.adjoint() * block;
        }
        let trace: f64 = (0..ns).map(|i| gram[(i, i)].re).sum();
        if !(trace > f64::MIN_POSITIVE) {
            zero_subarrays.push(r);
            continue;
        }
        let eig = SymmetricEigen::new(gram);
        let top = eig.eigenvalues.imax();
        let v = eig.eigenvectors.column(top);
        let reference = v[0].arg();
        for (i, m) in cols.enumerate() {
            phases[m] = if v[i].norm() > 0.0 { v[i].arg() - reference } else { 0.0 };
        }
    }
    Ok(AnalogInit { analog: AnalogPrecoder::new(phases, mapping.clone())?, zero_subarrays })
}

/// Regularized zero-forcing on each effective channel `E_g = H_g F_RF`:
/// `F = E^H (E E^H + (Kσ²/Pt) I)^{-1}` with unit-norm columns. Not yet
/// scaled to the power budget.
pub fn svd_digital_init(effective: &[CMatrix], budget: &LinkBudget) -> Result<DigitalPrecoderSet> {
    let mut out = Vec::with_capacity(effective.len());
    for e in effective {
        let k = e.nrows();
        if k > e.ncols() {
            return Err(Error::Shape(format!("{k} users exceed {} RF chains", e.ncols())));
        }
        let reg = k as f64 * budget.sigma2 / budget.pt_watts;
        let gram = e * e.adjoint() + CMatrix::identity(k, k) * Complex64::new(reg, 0.0);
        let inv = gram
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("regularized Gram matrix is singular".into()))?;
        let mut f = e.adjoint() * inv;
        for mut col in f.column_iter_mut() {
            let n = col.norm();
            if n > 0.0 {
                col /= Complex64::new(n, 0.0);
            }
        }
        out.push(f);
    }
    DigitalPrecoderSet::new(out)
}

/// Feasible hybrid precoder for a given pattern from the two anchors.
pub fn hbf_solve(pattern: &PatternVector, channels: &[CMatrix], ctx: &HbfContext) -> Result<BeamformingSolution> {
    let analog = svd_analog_init(channels, &ctx.mapping)?.analog;
    let f_rf = analog.matrix();
    let effective: Vec<CMatrix> = channels.iter().map(|h| h * &f_rf).collect();
    let digital = normalize_power(&svd_digital_init(&effective, &ctx.budget)?, &analog, ctx.budget.pt_watts)?;
    let achieved_se = sum_se(channels, &analog, &digital, ctx.budget.sigma2)?;
    Ok(BeamformingSolution { pattern: pattern.clone(), analog, digital, achieved_se })
}

/// [`hbf_solve`] on the channel gathered from `emcsi` under `pattern`.
pub fn solve_pattern(emcsi: &EmCsiTensor, pattern: &PatternVector, ctx: &HbfContext) -> Result<BeamformingSolution> {
    hbf_solve(pattern, &apply_pattern(emcsi, pattern)?, ctx)
}

/// Outcome of a coordinate-wise greedy search.
#[derive(Debug, Clone)]
pub struct GreedyResult {
    pub best: BeamformingSolution,
    /// SE after the initial evaluation and after every antenna step.
    pub trace: Vec<f64>,
    pub evaluations: usize,
}

/// Coordinate-wise search from `c ≡ 1`: sweep antennas in ascending order,
/// try every mode, keep the best (ties to the lowest mode index).
pub fn greedy_search<F>(num_antennas: usize, num_patterns: usize, gcfg: &GreedyConfig, mut evaluate: F) -> Result<GreedyResult>
where
    F: FnMut(&PatternVector) -> Result<BeamformingSolution>,
{
    gcfg.validate()?;
    let mut best = evaluate(&PatternVector::uniform(num_antennas, 1))?;
    let mut trace = vec![best.achieved_se];
    let mut evaluations = 1;
    for _ in 0..gcfg.max_sweeps {
        let sweep_start = best.achieved_se;
        for m in 0..num_antennas {
            let current = best.pattern.modes()[m];
            let mut step_best: Option<BeamformingSolution> = None;
            for mode in 1..=num_patterns {
                let cand = if mode == current {
                    best.clone()
                } else {
                    evaluations += 1;
                    evaluate(&best.pattern.with_mode(m, mode))?
                };
                if step_best.as_ref().is_none_or(|b| cand.achieved_se > b.achieved_se) {
                    step_best = Some(cand);
                }
            }
            if let Some(s) = step_best {
                best = s;
            }
            trace.push(best.achieved_se);
        }
        if best.achieved_se - sweep_start < gcfg.improvement_tol {
            break;
        }
    }
    Ok(GreedyResult { best, trace, evaluations })
}

pub fn greedy_pattern_select(emcsi: &EmCsiTensor, gcfg: &GreedyConfig, ctx: &HbfContext) -> Result<BeamformingSolution> {
    Ok(greedy_pattern_select_traced(emcsi, gcfg, ctx)?.best)
}

pub fn greedy_pattern_select_traced(emcsi: &EmCsiTensor, gcfg: &GreedyConfig, ctx: &HbfContext) -> Result<GreedyResult> {
    greedy_search(emcsi.num_antennas(), emcsi.num_patterns(), gcfg, |c| solve_pattern(emcsi, c, ctx))
}

/// Default cap on `M^Nt` for exhaustive search.
pub const DEFAULT_EXHAUSTIVE_CAP: u64 = 4096;

/// Scores every `c ∈ 𝓜^{Nt}` in lexicographic order; ties keep the
/// lexicographically smallest.
pub fn exhaustive_search<F>(num_antennas: usize, num_patterns: usize, cap: u64, mut evaluate: F) -> Result<BeamformingSolution>
where
    F: FnMut(&PatternVector) -> Result<BeamformingSolution>,
{
    let size = (num_patterns as u128).checked_pow(num_antennas as u32);
    match size {
        Some(s) if s <= cap as u128 => {}
        _ => {
            let size = size.map_or_else(|| format!("{num_patterns}^{num_antennas}"), |s| s.to_string());
            return Err(Error::SearchTooLarge { size, cap });
        }
    }
    let mut modes = vec![1usize; num_antennas];
    let mut best: Option<BeamformingSolution> = None;
    loop {
        let cand = evaluate(&PatternVector::new(modes.clone(), num_patterns)?)?;
        if best.as_ref().is_none_or(|b| cand.achieved_se > b.achieved_se) {
            best = Some(cand);
        }
        // odometer, last antenna fastest
        let mut i = num_antennas;
        loop {
            if i == 0 {
                return best.ok_or_else(|| Error::Shape("empty search space".into()));
            }
            i -= 1;
            if modes[i] < num_patterns {
                modes[i] += 1;
                break;
            }
            modes[i] = 1;
        }
    }
}

pub fn exhaustive_pattern_select(emcsi: &EmCsiTensor, ctx: &HbfContext, cap: u64) -> Result<BeamformingSolution> {
    exhaustive_search(emcsi.num_antennas(), emcsi.num_patterns(), cap, |c| solve_pattern(emcsi, c, ctx))
}

/// Uniformly random mode per antenna, seeded.
pub fn random_pattern_vector(num_antennas: usize, num_patterns: usize, seed: u64) -> PatternVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes = (0..num_antennas).map(|_| rng.random_range(1..=num_patterns)).collect();
    PatternVector::new(modes, num_patterns).expect("modes drawn in range")
}

pub fn random_pattern(emcsi: &EmCsiTensor, ctx: &HbfContext, seed: u64) -> Result<BeamformingSolution> {
    let c = random_pattern_vector(emcsi.num_antennas(), emcsi.num_patterns(), seed);
    solve_pattern(emcsi, &c, ctx)
}

/// Every antenna in `mode` (mode 1 is the conventional fixed array).
pub fn fixed_pattern(emcsi: &EmCsiTensor, ctx: &HbfContext, mode: usize) -> Result<BeamformingSolution> {
    let c = PatternVector::new(vec![mode; emcsi.num_antennas()], emcsi.num_patterns())?;
    solve_pattern(emcsi, &c, ctx)
}
