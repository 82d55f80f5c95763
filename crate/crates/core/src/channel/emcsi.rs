use nalgebra::DMatrix;
use num_complex::Complex64;

use super::geometry::{ArrayGeometry, PatternVector};
use super::paths::PathSet;
use super::pattern::PatternCodebook;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::CMatrix;

/// Channel coefficients for every (subcarrier, user, antenna, candidate mode).
///
/// Stored row-major over `(g, u, m, mode)`. Entries are the elements of
/// `h_{u,g}`; [`apply_pattern`] performs the Hermitian row stacking.
#[derive(Debug, Clone, PartialEq)]
pub struct EmCsiTensor {
    dims: [usize; 4],
    data: Vec<Complex64>,
    subcarrier_freqs: Vec<f64>,
}

impl EmCsiTensor {
    pub fn zeros(num_subcarriers: usize, num_users: usize, num_antennas: usize, num_patterns: usize) -> Self {
        let dims = [num_subcarriers, num_users, num_antennas, num_patterns];
        Self {
            dims,
            data: vec![Complex64::new(0.0, 0.0); dims.iter().product()],
            subcarrier_freqs: vec![0.0; num_subcarriers],
        }
    }

    pub fn from_parts(dims: [usize; 4], data: Vec<Complex64>, subcarrier_freqs: Vec<f64>) -> Result<Self> {
        if data.len() != dims.iter().product::<usize>() || subcarrier_freqs.len() != dims[0] {
            return Err(Error::Shape(format!(
                "tensor data of length {} / {} frequencies does not match dims {dims:?}",
                data.len(),
                subcarrier_freqs.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Domain("tensor contains non-finite entries".into()));
        }
        Ok(Self { dims, data, subcarrier_freqs })
    }

    /// `(Nc, K, Nt, M)`.
    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn num_subcarriers(&self) -> usize {
        self.dims[0]
    }

    pub fn num_users(&self) -> usize {
        self.dims[1]
    }

    pub fn num_antennas(&self) -> usize {
        self.dims[2]
    }

    pub fn num_patterns(&self) -> usize {
        self.dims[3]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn subcarrier_freqs(&self) -> &[f64] {
        &self.subcarrier_freqs
    }

    #[inline]
    pub fn offset(&self, g: usize, u: usize, m: usize, mode: usize) -> usize {
        let [_, k, nt, np] = self.dims;
        ((g * k + u) * nt + m) * np + mode
    }

    /// Entry at zero-based `(g, u, m, mode)`.
    #[inline]
    pub fn get(&self, g: usize, u: usize, m: usize, mode: usize) -> Complex64 {
        self.data[self.offset(g, u, m, mode)]
    }

    /// Root-mean-square entry magnitude, used to scale network features.
    pub fn rms(&self) -> f64 {
        let n = self.data.len().max(1) as f64;
        (self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() / n).sqrt()
    }

    /// Entry-wise multiply by a real constant.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|z| z * s).collect(),
            subcarrier_freqs: self.subcarrier_freqs.clone(),
        }
    }

    pub fn check_config(&self, cfg: &SystemConfig) -> Result<()> {
        let want = [cfg.num_subcarriers, cfg.num_users, cfg.num_antennas, cfg.num_patterns];
        if self.dims != want {
            return Err(Error::Config(format!(
                "tensor dims {:?} do not match configuration {want:?}",
                self.dims
            )));
        }
        Ok(())
    }
}

/// Builds `Ĥ` from one path set per user.
///
/// Entry `(g, u, m, mode)` is
/// `√(K_R/(K_R+1)) β₀ [a(θ₀, φ₀)]_m + √(1/(K_R+1)) Σ_l β_l [a(θ_l, φ_l)]_m`
/// with antenna `m` in `mode` and `β_l = ρ α_l exp(−j 2π τ_l f_g)`.
pub fn build_emcsi(
    cfg: &SystemConfig,
    geom: &ArrayGeometry,
    codebook: &PatternCodebook,
    paths: &[PathSet],
) -> Result<EmCsiTensor> {
    let (nc, k, nt, np) = (cfg.num_subcarriers, cfg.num_users, cfg.num_antennas, cfg.num_patterns);
    if paths.len() != k {
        return Err(Error::Config(format!("{} path sets supplied for {k} users", paths.len())));
    }
    if geom.len() != nt || codebook.len() != np {
        return Err(Error::Config(format!(
            "geometry has {} elements and codebook {} modes; configuration wants {nt} and {np}",
            geom.len(),
            codebook.len()
        )));
    }
    let freqs = cfg.subcarrier_freqs();
    let lambda = cfg.wavelength_m();
    let mut out = EmCsiTensor::zeros(nc, k, nt, np);
    out.subcarrier_freqs = freqs.clone();

    for (u, ps) in paths.iter().enumerate() {
        let kr = ps.rician_k_linear;
        let (w_los, w_nlos) = if kr.is_infinite() {
            (1.0, 0.0)
        } else {
            ((kr / (kr + 1.0)).sqrt(), (1.0 / (kr + 1.0)).sqrt())
        };
        let weighted = std::iter::once((w_los, &ps.los)).chain(ps.nlos.iter().map(|p| (w_nlos, p)));
        for (w, path) in weighted {
            let phases = geom.phase_factors(path.theta, path.phi, lambda);
            let gains: Vec<Complex64> = codebook.modes().iter().map(|md| md.gain(path.theta, path.phi)).collect();
            for (g, &f) in freqs.iter().enumerate() {
                let beta = ps.large_scale_gain
                    * path.gain
                    * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * path.delay_s * f);
                let wb = beta * w;
                for (m, ph) in phases.iter().enumerate() {
                    let base = wb * ph;
                    let start = out.offset(g, u, m, 0);
                    for (slot, gain) in out.data[start..start + np].iter_mut().zip(&gains) {
                        *slot += base * gain;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gathers the per-subcarrier channel matrices `H_g(c)` (`K × Nt`) whose
/// rows are `h_{u,g}(c)^H`.
pub fn apply_pattern(emcsi: &EmCsiTensor, c: &PatternVector) -> Result<Vec<CMatrix>> {
    let [nc, k, nt, np] = emcsi.dims;
    if !c.is_valid_for(nt, np) {
        return Err(Error::Domain(format!(
            "pattern vector {:?} is not in {{1..={np}}}^{nt}",
            c.modes()
        )));
    }
    Ok((0..nc)
        .map(|g| DMatrix::from_fn(k, nt, |u, m| emcsi.get(g, u, m, c.index(m)).conj()))
        .collect())
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::channel::paths::{sample_path_set, Path};
    use crate::channel::pattern::PatternCodebook;

    fn micro_cfg() -> SystemConfig {
        SystemConfig {
            num_subcarriers: 2,
            num_users: 1,
            num_patterns: 2,
            num_nlos_paths: 1,
            ..SystemConfig::desk().with_array(1, 2, 1)
        }
    }

    fn setup(cfg: &SystemConfig, seed: u64) -> (ArrayGeometry, PatternCodebook, Vec<PathSet>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let paths = (0..cfg.num_users).map(|_| sample_path_set(cfg, &mut rng)).collect();
        (ArrayGeometry::from_config(cfg), PatternCodebook::from_config(cfg).unwrap(), paths)
    }

    /// Fully unrolled scalar evaluation of the channel formula.
    fn scalar_entry(
        cfg: &SystemConfig,
        geom: &ArrayGeometry,
        cb: &PatternCodebook,
        ps: &PathSet,
        g: usize,
        m: usize,
        mode: usize,
    ) -> Complex64 {
        let lambda = cfg.wavelength_m();
        let nc = cfg.num_subcarriers as f64;
        let f = (g as f64 + 1.0 - (nc + 1.0) / 2.0) * cfg.bandwidth_hz / nc;
        let term = |p: &Path| {
            let (st, ct, sp, cp) = (p.theta.sin(), p.theta.cos(), p.phi.sin(), p.phi.cos());
            let pos = geom.positions()[m];
            let arg = -2.0 * std::f64::consts::PI / lambda * (st * cp * pos[0] + st * sp * pos[1] + ct * pos[2]);
            let a = cb.modes()[mode].amplitude(p.theta, p.phi);
            let dphase = -2.0 * std::f64::consts::PI * p.delay_s * f;
            let beta = ps.large_scale_gain * p.gain * Complex64::new(dphase.cos(), dphase.sin());
            beta * a * Complex64::new(arg.cos(), arg.sin())
        };
        let kr = ps.rician_k_linear;
        let mut acc = (kr / (kr + 1.0)).sqrt() * term(&ps.los);
        for p in &ps.nlos {
            acc += (1.0 / (kr + 1.0)).sqrt() * term(p);
        }
        acc
    }

    #[test]
    fn matches_unrolled_scalar_evaluation() {
        let cfg = SystemConfig { num_users: 1, ..micro_cfg() };
        for seed in 0..20 {
            let (geom, cb, paths) = setup(&cfg, seed);
            let t = build_emcsi(&cfg, &geom, &cb, &paths).unwrap();
            for g in 0..2 {
                for m in 0..2 {
                    for mode in 0..2 {
                        let want = scalar_entry(&cfg, &geom, &cb, &paths[0], g, m, mode);
                        let got = t.get(g, 0, m, mode);
                        assert!((got - want).norm() <= 1e-12 * want.norm().max(1e-30) + 1e-24);
                    }
                }
            }
        }
    }

    #[test]
    fn dominant_los_without_delay_is_flat_in_frequency() {
        let cfg = micro_cfg();
        let (geom, cb, mut paths) = setup(&cfg, 5);
        paths[0].rician_k_linear = 1e12;
        paths[0].los.delay_s = 0.0;
        let t = build_emcsi(&cfg, &geom, &cb, &paths).unwrap();
        let w = (1e12f64 / (1e12 + 1.0)).sqrt();
        for m in 0..2 {
            for mode in 0..2 {
                let los = paths[0].large_scale_gain
                    * paths[0].los.gain
                    * cb.modes()[mode].gain(paths[0].los.theta, paths[0].los.phi)
                    * geom.phase_factors(paths[0].los.theta, paths[0].los.phi, cfg.wavelength_m())[m];
                for g in 0..2 {
                    let z = t.get(g, 0, m, mode);
                    // NLoS residual carries weight 1e-6
                    assert!((z - los * w).norm() <= 1e-4 * los.norm());
                    assert!((z - t.get(0, 0, m, mode)).norm() <= 1e-4 * los.norm());
                }
            }
        }
    }

    #[test]
    fn los_only_with_unit_rician_factor() {
        let cfg = SystemConfig { num_nlos_paths: 0, rician_k_db: 0.0, ..micro_cfg() };
        let (geom, cb, paths) = setup(&cfg, 8);
        let t = build_emcsi(&cfg, &geom, &cb, &paths).unwrap();
        let mut no_weight = paths.clone();
        no_weight[0].rician_k_linear = f64::INFINITY;
        let full = build_emcsi(&cfg, &geom, &cb, &no_weight).unwrap();
        for (a, b) in t.data().iter().zip(full.data()) {
            assert!((a - b * 0.5f64.sqrt()).norm() <= 1e-12 * b.norm());
        }
    }

    #[test]
    fn rician_decomposition() {
        let cfg = SystemConfig { num_users: 2, num_nlos_paths: 3, ..SystemConfig::desk() };
        let (geom, cb, paths) = setup(&cfg, 11);
        let full = build_emcsi(&cfg, &geom, &cb, &paths).unwrap();
        let los_only: Vec<PathSet> = paths.iter().map(|p| PathSet { nlos: vec![], ..p.clone() }).collect();
        let nlos_only: Vec<PathSet> = paths
            .iter()
            .map(|p| PathSet { los: Path { gain: Complex64::new(0.0, 0.0), ..p.los }, ..p.clone() })
            .collect();
        let a = build_emcsi(&cfg, &geom, &cb, &los_only).unwrap();
        let b = build_emcsi(&cfg, &geom, &cb, &nlos_only).unwrap();
        for ((f, x), y) in full.data().iter().zip(a.data()).zip(b.data()) {
            assert!((f - (x + y)).norm() <= 1e-12 * f.norm().max(x.norm()));
        }
    }

    #[test]
    fn equal_delays_give_per_user_global_phase() {
        let cfg = SystemConfig { num_users: 2, ..SystemConfig::desk() };
        let (geom, cb, mut paths) = setup(&cfg, 13);
        for ps in &mut paths {
            let tau = ps.los.delay_s;
            for p in &mut ps.nlos {
                p.delay_s = tau;
            }
        }
        let t = build_emcsi(&cfg, &geom, &cb, &paths).unwrap();
        for u in 0..2 {
            let r = t.get(3, u, 0, 0) / t.get(0, u, 0, 0);
            assert!((r.norm() - 1.0).abs() < 1e-10);
            for m in 0..cfg.num_antennas {
                for mode in 0..cfg.num_patterns {
                    let z0 = t.get(0, u, m, mode);
                    assert!((t.get(3, u, m, mode) - r * z0).norm() <= 1e-10 * z0.norm());
                }
            }
        }
    }

    #[test]
    fn apply_pattern_matches_gather_loop() {
        let cfg = SystemConfig { num_users: 2, ..SystemConfig::desk() };
        let (geom, cb, paths) = setup(&cfg, 17);
        let t = build_emcsi(&cfg, &geom, &cb, &paths).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let c = PatternVector::new((0..8).map(|_| rng.random_range(1..=4)).collect(), 4).unwrap();
            let hs = apply_pattern(&t, &c).unwrap();
            assert_eq!(hs.len(), cfg.num_subcarriers);
            for (g, h) in hs.iter().enumerate() {
                for u in 0..2 {
                    for m in 0..8 {
                        let idx = ((g * 2 + u) * 8 + m) * 4 + c.modes()[m] - 1;
                        assert_eq!(h[(u, m)], t.data()[idx].conj());
                    }
                }
            }
        }
    }

    #[test]
    fn single_mode_tensor_ignores_pattern() {
        let cfg = SystemConfig { num_patterns: 1, ..SystemConfig::desk() };
        let (geom, cb, paths) = setup(&cfg, 2);
        let t = build_emcsi(&cfg, &geom, &cb, &paths).unwrap();
        let a = apply_pattern(&t, &PatternVector::uniform(8, 1)).unwrap();
        assert!(apply_pattern(&t, &PatternVector::uniform(8, 2)).is_err());
        assert_eq!(a[0][(0, 0)], t.get(0, 0, 0, 0).conj());
    }

    #[test]
    fn wrong_user_count_is_config_error() {
        let cfg = SystemConfig::desk();
        let (geom, cb, paths) = setup(&cfg, 1);
        assert!(matches!(build_emcsi(&cfg, &geom, &cb, &paths[..1]), Err(Error::Config(_))));
    }
}
