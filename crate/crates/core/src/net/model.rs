use std::f64::consts::LN_2;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use super::config::{pilot_indices, PrHbfNetConfig};
use crate::baselines::svd_analog_init;
use crate::channel::{apply_pattern, EmCsiTensor, PatternVector};
use crate::config::{LinkBudget, SystemConfig};
use crate::error::{Error, Result};
use crate::nn::{argmax, Bound, DiffTensor, Graph, Init, Linear, ParamId, ParamStore, Tensor, TransformerEncoder};
use crate::precoding::{sum_se, AnalogPrecoder, BeamformingSolution, DigitalPrecoderSet, SubarrayMapping};
use crate::CMatrix;

/// Parameter-name prefixes of the three sub-networks.
pub const PATTERN_PREFIX: &str = "pattern.";
pub const ANALOG_PREFIX: &str = "analog.";
pub const DIGITAL_PREFIX: &str = "digital.";

/// How the pattern vector of a forward pass is chosen.
#[derive(Debug, Clone, Copy)]
pub enum PatternChoice<'a> {
    /// Row-wise argmax of the pattern encoder's scores.
    Learned,
    /// Every antenna uses this 1-based mode.
    Forced(usize),
    Given(&'a PatternVector),
}

/// Complex matrix as a pair of real graph nodes.
#[derive(Clone, Copy)]
struct Cx<'g> {
    re: DiffTensor<'g>,
    im: DiffTensor<'g>,
}

impl<'g> Cx<'g> {
    fn matmul(&self, o: &Cx<'g>) -> Result<Cx<'g>> {
        Ok(Cx {
            re: self.re.matmul(&o.re)?.sub(&self.im.matmul(&o.im)?)?,
            im: self.re.matmul(&o.im)?.add(&self.im.matmul(&o.re)?)?,
        })
    }

    /// `self^H · o`.
    fn adjoint_matmul(&self, o: &Cx<'g>) -> Result<Cx<'g>> {
        let (ar, ai) = (self.re.transpose()?, self.im.transpose()?);
        Ok(Cx {
            re: ar.matmul(&o.re)?.add(&ai.matmul(&o.im)?)?,
            im: ar.matmul(&o.im)?.sub(&ai.matmul(&o.re)?)?,
        })
    }

    /// `self · o^H`.
    fn matmul_adjoint(&self, o: &Cx<'g>) -> Result<Cx<'g>> {
        let (br, bi) = (o.re.transpose()?, o.im.transpose()?);
        Ok(Cx {
            re: self.re.matmul(&br)?.add(&self.im.matmul(&bi)?)?,
            im: self.im.matmul(&br)?.sub(&self.re.matmul(&bi)?)?,
        })
    }

    fn add(&self, o: &Cx<'g>) -> Result<Cx<'g>> {
        Ok(Cx { re: self.re.add(&o.re)?, im: self.im.add(&o.im)? })
    }

    fn abs2(&self) -> Result<DiffTensor<'g>> {
        self.re.square()?.add(&self.im.square()?)
    }

    fn slice_rows(&self, start: usize, len: usize) -> Result<Cx<'g>> {
        Ok(Cx { re: self.re.slice_rows(start, len)?, im: self.im.slice_rows(start, len)? })
    }

    fn reshape(&self, shape: &[usize]) -> Result<Cx<'g>> {
        Ok(Cx { re: self.re.reshape(shape)?, im: self.im.reshape(shape)? })
    }

    fn mul_real(&self, s: &DiffTensor<'g>) -> Result<Cx<'g>> {
        Ok(Cx { re: self.re.mul(s)?, im: self.im.mul(s)? })
    }
}

fn broadcast_scalar<'g>(s: DiffTensor<'g>, shape: &[usize]) -> Result<DiffTensor<'g>> {
    let n = shape.iter().product();
    s.gather(Arc::new(vec![0; n]), shape)
}

/// Pattern-selection output of one forward pass.
pub struct PatternStage<'g> {
    /// `(Nt × M)` scores, absent when the pattern was not learned.
    pub logits: Option<DiffTensor<'g>>,
    /// `(Nt × M)` one-hot selection.
    pub one_hot: DiffTensor<'g>,
    pub pattern: PatternVector,
}

/// Everything one forward pass produces.
pub struct ForwardPass<'g> {
    pub pattern: PatternStage<'g>,
    /// Final phases, length `Nt`.
    pub phases: DiffTensor<'g>,
    /// Power-normalized digital precoders stacked as `(N_RF × Nc·K)`,
    /// subcarrier-major columns.
    pub digital_re: DiffTensor<'g>,
    pub digital_im: DiffTensor<'g>,
    /// Sum SE in bits/s/Hz.
    pub se: DiffTensor<'g>,
}

/// Per-sample constants shared by the sub-networks.
struct SampleInputs {
    /// `1 / rms` of the tensor; channels enter the graph multiplied by it.
    scale: f64,
}

/// Pattern-selection encoder cascaded with residual analog and digital
/// refinement encoders around the classical anchors.
#[derive(Debug, Clone)]
pub struct PrHbfNet {
    cfg: PrHbfNetConfig,
    num_subcarriers: usize,
    num_users: usize,
    num_antennas: usize,
    num_patterns: usize,
    mapping: SubarrayMapping,
    pilots: Vec<usize>,
    store: ParamStore,
    pattern_in: Linear,
    pattern_pos: ParamId,
    pattern_enc: TransformerEncoder,
    pattern_head: Linear,
    analog_in: Linear,
    analog_pos: ParamId,
    analog_enc: TransformerEncoder,
    analog_head: Linear,
    digital_in: Linear,
    digital_pos: ParamId,
    digital_enc: TransformerEncoder,
    digital_head: Linear,
}

impl PrHbfNet {
    pub fn new(sys: &SystemConfig, cfg: &PrHbfNetConfig) -> Result<Self> {
        sys.validate()?;
        cfg.validate()?;
        let (nc, k, nt, m) = (sys.num_subcarriers, sys.num_users, sys.num_antennas, sys.num_patterns);
        let n_rf = sys.num_rf_chains;
        let mapping = SubarrayMapping::new(nt, n_rf)?;
        let ns = mapping.subarray_size();
        let pilots = pilot_indices(nc, cfg.pilot_subcarriers)?;
        let p = pilots.len();
        let mut store = ParamStore::new();
        let mut init = Init::new(cfg.init_seed);

        let d1 = cfg.pattern_encoder.d_model;
        let pattern_in = Linear::new(&mut store, &mut init, "pattern.embed", 2 * k * m * p, d1);
        let pattern_pos = store.add("pattern.position", init.uniform(&[nt, d1], 0.1));
        let pattern_enc = TransformerEncoder::new(&mut store, &mut init, "pattern.encoder", &cfg.pattern_encoder)?;
        let pattern_head = Linear::new(&mut store, &mut init, "pattern.head", d1, m);

        let d2 = cfg.analog_encoder.d_model;
        let analog_in = Linear::new(&mut store, &mut init, "analog.embed", 2 * k * p * ns + 2 * ns, d2);
        let analog_pos = store.add("analog.position", init.uniform(&[n_rf, d2], 0.1));
        let analog_enc = TransformerEncoder::new(&mut store, &mut init, "analog.encoder", &cfg.analog_encoder)?;
        let analog_head = Linear::zeros(&mut store, "analog.head", d2, ns);

        let d3 = cfg.digital_encoder.d_model;
        let digital_in = Linear::new(&mut store, &mut init, "digital.embed", 4 * k * n_rf, d3);
        let digital_pos = store.add("digital.position", init.uniform(&[nc, d3], 0.1));
        let digital_enc = TransformerEncoder::new(&mut store, &mut init, "digital.encoder", &cfg.digital_encoder)?;
        let digital_head = Linear::zeros(&mut store, "digital.head", d3, 2 * n_rf * k);

        Ok(Self {
            cfg: cfg.clone(),
            num_subcarriers: nc,
            num_users: k,
            num_antennas: nt,
            num_patterns: m,
            mapping,
            pilots,
            store,
            pattern_in,
            pattern_pos,
            pattern_enc,
            pattern_head,
            analog_in,
            analog_pos,
            analog_enc,
            analog_head,
            digital_in,
            digital_pos,
            digital_enc,
            digital_head,
        })
    }

    pub fn config(&self) -> &PrHbfNetConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn mapping(&self) -> &SubarrayMapping {
        &self.mapping
    }

    pub fn pilot_subcarriers(&self) -> &[usize] {
        &self.pilots
    }

    /// The two residual heads, which start at zero.
    pub fn residual_heads(&self) -> [Linear; 2] {
        [self.analog_head, self.digital_head]
    }

    fn check_sample(&self, sample: &EmCsiTensor) -> Result<SampleInputs> {
        let want = [self.num_subcarriers, self.num_users, self.num_antennas, self.num_patterns];
        if sample.dims() != want {
            return Err(Error::Shape(format!(
                "tensor dims {:?} do not match the network's {want:?}",
                sample.dims()
            )));
        }
        let rms = sample.rms();
        Ok(SampleInputs { scale: if rms > 0.0 { 1.0 / rms } else { 1.0 } })
    }

    fn pattern_from_rows(&self, rows: &[f64]) -> Result<PatternVector> {
        let m = self.num_patterns;
        let modes = rows.chunks(m).map(|r| argmax(r) + 1).collect();
        PatternVector::new(modes, m)
    }

    /// Scores, one-hot selection and pattern vector.
    pub fn prn_forward<'g>(
        &self,
        g: &'g Graph,
        p: &Bound<'g>,
        sample: &EmCsiTensor,
        choice: PatternChoice<'_>,
    ) -> Result<PatternStage<'g>> {
        let inputs = self.check_sample(sample)?;
        let (nt, m) = (self.num_antennas, self.num_patterns);
        let fixed = |pattern: PatternVector| -> Result<PatternStage<'g>> {
            if !pattern.is_valid_for(nt, m) {
                return Err(Error::Domain(format!("pattern {:?} is not valid for {nt} antennas, {m} modes", pattern.modes())));
            }
            let mut oh = vec![0.0; nt * m];
            for a in 0..nt {
                oh[a * m + pattern.index(a)] = 1.0;
            }
            Ok(PatternStage { logits: None, one_hot: g.constant(Tensor::from_rows(nt, m, oh)?), pattern })
        };
        match choice {
            PatternChoice::Forced(mode) => return fixed(PatternVector::new(vec![mode; nt], m)?),
            PatternChoice::Given(c) => return fixed(c.clone()),
            PatternChoice::Learned => {}
        }
        let k = self.num_users;
        let width = 2 * k * m * self.pilots.len();
        let mut feats = Vec::with_capacity(nt * width);
        for a in 0..nt {
            for &sc in &self.pilots {
                for u in 0..k {
                    for mode in 0..m {
                        let h = sample.get(sc, u, a, mode) * inputs.scale;
                        feats.push(h.re);
                        feats.push(h.im);
                    }
                }
            }
        }
        let x = self.pattern_in.forward(p, g.constant(Tensor::from_rows(nt, width, feats)?))?;
        let x = x.add(&p.get(self.pattern_pos))?;
        let z = self.pattern_enc.forward(p, x)?;
        let logits = self.pattern_head.forward(p, z)?;
        let one_hot = logits.ste_argmax(self.cfg.ste_temperature)?;
        let pattern = self.pattern_from_rows(logits.value().data())?;
        Ok(PatternStage { logits: Some(logits), one_hot, pattern })
    }

    /// Stacked, scaled channel `(Nc·K × Nt)` whose row `g·K + u` is
    /// `h_{u,g}^H`. With `differentiable` the gather is a product with the
    /// one-hot selection; otherwise it indexes the tensor directly.
    fn gather_channel<'g>(
        &self,
        g: &'g Graph,
        sample: &EmCsiTensor,
        stage: &PatternStage<'g>,
        scale: f64,
        differentiable: bool,
    ) -> Result<Cx<'g>> {
        let (nc, k, nt, m) = (self.num_subcarriers, self.num_users, self.num_antennas, self.num_patterns);
        let rows = nc * k;
        if !differentiable {
            let mut re = Vec::with_capacity(rows * nt);
            let mut im = Vec::with_capacity(rows * nt);
            for hg in apply_pattern(sample, &stage.pattern)? {
                for u in 0..k {
                    for a in 0..nt {
                        let h = hg[(u, a)] * scale;
                        re.push(h.re);
                        im.push(h.im);
                    }
                }
            }
            return Ok(Cx {
                re: g.constant(Tensor::from_rows(rows, nt, re)?),
                im: g.constant(Tensor::from_rows(rows, nt, im)?),
            });
        }
        let mut re = Vec::with_capacity(rows * nt * m);
        let mut im = Vec::with_capacity(rows * nt * m);
        for sc in 0..nc {
            for u in 0..k {
                for a in 0..nt {
                    for mode in 0..m {
                        let h = sample.get(sc, u, a, mode).conj() * scale;
                        re.push(h.re);
                        im.push(h.im);
                    }
                }
            }
        }
        let sel = stage.one_hot.reshape(&[nt * m])?.broadcast_rows(rows)?;
        let pick = |data: Vec<f64>| -> Result<DiffTensor<'g>> {
            let c = g.constant(Tensor::from_rows(rows, nt * m, data)?);
            c.mul(&sel)?.reshape(&[rows * nt, m])?.sum_axis(1)?.reshape(&[rows, nt])
        };
        Ok(Cx { re: pick(re)?, im: pick(im)? })
    }

    /// Final phases: anchor phases plus the encoder's residual.
    pub fn hbn_analog_forward<'g>(
        &self,
        g: &'g Graph,
        p: &Bound<'g>,
        channel_re: DiffTensor<'g>,
        channel_im: DiffTensor<'g>,
        anchor: &AnalogPrecoder,
    ) -> Result<DiffTensor<'g>> {
        let (k, nt) = (self.num_users, self.num_antennas);
        let n_rf = self.mapping.num_rf_chains();
        let ns = self.mapping.subarray_size();
        let rows: Vec<usize> = self
            .pilots
            .iter()
            .flat_map(|&sc| (0..k).flat_map(move |u| (0..nt).map(move |a| (sc * k + u) * nt + a)))
            .collect();
        let pk = self.pilots.len() * k;
        let rows = Arc::new(rows);
        let pr = channel_re.gather(rows.clone(), &[pk, nt])?;
        let pi = channel_im.gather(rows, &[pk, nt])?;
        // row a of the transpose holds antenna a's features; subarrays are
        // contiguous, so a reshape groups them per RF chain
        let per_chain = g.concat(&[pr, pi], 0)?.transpose()?.reshape(&[n_rf, ns * 2 * pk])?;
        let theta0 = anchor.phases();
        let cos0 = g.constant(Tensor::from_rows(n_rf, ns, theta0.iter().map(|t| t.cos()).collect())?);
        let sin0 = g.constant(Tensor::from_rows(n_rf, ns, theta0.iter().map(|t| t.sin()).collect())?);
        let tokens = g.concat(&[per_chain, cos0, sin0], 1)?;
        let x = self.analog_in.forward(p, tokens)?.add(&p.get(self.analog_pos))?;
        let delta = self.analog_head.forward(p, self.analog_enc.forward(p, x)?)?.reshape(&[nt])?;
        g.constant(Tensor::new(vec![nt], theta0.to_vec())?).add(&delta)
    }

    fn analog_matrix<'g>(&self, g: &'g Graph, phases: DiffTensor<'g>) -> Result<Cx<'g>> {
        let nt = self.num_antennas;
        let n_rf = self.mapping.num_rf_chains();
        let mut mask = vec![0.0; nt * n_rf];
        for a in 0..nt {
            mask[a * n_rf + self.mapping.rf_of(a)] = 1.0;
        }
        let mask = g.constant(Tensor::from_rows(nt, n_rf, mask)?);
        Ok(Cx {
            re: phases.cos().broadcast_cols(n_rf)?.mul(&mask)?,
            im: phases.sin().broadcast_cols(n_rf)?.mul(&mask)?,
        })
    }

    /// Regularized zero-forcing anchor on one scaled effective channel
    /// `(K × N_RF)`, with unit-norm columns.
    fn rzf_anchor<'g>(&self, g: &'g Graph, e: &Cx<'g>, reg: f64) -> Result<Cx<'g>> {
        let k = self.num_users;
        let gram = e.matmul_adjoint(e)?;
        let mut eye = vec![0.0; k * k];
        for i in 0..k {
            eye[i * k + i] = reg;
        }
        let ar = gram.re.add(&g.constant(Tensor::from_rows(k, k, eye)?))?;
        let ai = gram.im;
        // real embedding of the complex system
        let top = g.concat(&[ar, ai.neg()], 1)?;
        let bottom = g.concat(&[ai, ar], 1)?;
        let inv = g.concat(&[top, bottom], 0)?.inverse()?;
        let b = Cx { re: inv.slice_rows(0, k)?.slice_cols(0, k)?, im: inv.slice_rows(k, k)?.slice_cols(0, k)? };
        let f = e.adjoint_matmul(&b)?;
        let norms = f.abs2()?.sum_axis(0)?.sqrt();
        let guard: Vec<f64> = norms.value().data().iter().map(|&n| if n > 0.0 { 0.0 } else { 1.0 }).collect();
        let norms = norms.add(&g.constant(Tensor::new(vec![k], guard)?))?;
        let norms = norms.broadcast_rows(self.mapping.num_rf_chains())?;
        Ok(Cx { re: f.re.div(&norms)?, im: f.im.div(&norms)? })
    }

    /// Power-normalized digital precoders `(N_RF × Nc·K)` for the scaled
    /// effective channel `(Nc·K × N_RF)`.
    fn hbn_digital_forward_scaled<'g>(
        &self,
        g: &'g Graph,
        p: &Bound<'g>,
        effective: &Cx<'g>,
        f_rf: &Cx<'g>,
        reg: f64,
        pt_watts: f64,
    ) -> Result<Cx<'g>> {
        let (nc, k) = (self.num_subcarriers, self.num_users);
        let n_rf = self.mapping.num_rf_chains();
        let mut anchors = Vec::with_capacity(nc);
        for sc in 0..nc {
            anchors.push(self.rzf_anchor(g, &effective.slice_rows(sc * k, k)?, reg)?);
        }
        let flat = |parts: Vec<DiffTensor<'g>>| -> Result<DiffTensor<'g>> {
            let rows = parts.iter().map(|t| t.reshape(&[1, n_rf * k])).collect::<Result<Vec<_>>>()?;
            g.concat(&rows, 0)
        };
        let anchor_re = flat(anchors.iter().map(|a| a.re).collect())?;
        let anchor_im = flat(anchors.iter().map(|a| a.im).collect())?;
        let e_tok = effective.reshape(&[nc, k * n_rf])?;
        let tokens = g.concat(&[e_tok.re, e_tok.im, anchor_re, anchor_im], 1)?;
        let x = self.digital_in.forward(p, tokens)?.add(&p.get(self.digital_pos))?;
        let delta = self.digital_head.forward(p, self.digital_enc.forward(p, x)?)?;
        let mut cols_re = Vec::with_capacity(nc);
        let mut cols_im = Vec::with_capacity(nc);
        for (sc, a) in anchors.iter().enumerate() {
            let row = delta.slice_rows(sc, 1)?;
            let d = Cx {
                re: row.slice_cols(0, n_rf * k)?.reshape(&[n_rf, k])?,
                im: row.slice_cols(n_rf * k, n_rf * k)?.reshape(&[n_rf, k])?,
            };
            let f = a.add(&d)?;
            cols_re.push(f.re);
            cols_im.push(f.im);
        }
        let f_all = Cx { re: g.concat(&cols_re, 1)?, im: g.concat(&cols_im, 1)? };
        let power = f_rf.matmul(&f_all)?.abs2()?.sum().scale(1.0 / nc as f64);
        if !(power.item() > 0.0) || !power.item().is_finite() {
            return Err(Error::Degenerate(format!(
                "digital precoders carry power {}; cannot rescale to the budget",
                power.item()
            )));
        }
        let gain = g.scalar(pt_watts).div(&power)?.sqrt();
        f_all.mul_real(&broadcast_scalar(gain, &[n_rf, nc * k])?)
    }

    /// Sum SE of stacked precoders on the scaled stacked channel.
    fn graph_sum_se<'g>(&self, g: &'g Graph, h: &Cx<'g>, x: &Cx<'g>, noise: f64) -> Result<DiffTensor<'g>> {
        let (nc, k) = (self.num_subcarriers, self.num_users);
        let n = nc * k;
        let power = h.matmul(x)?.abs2()?;
        let mut signal = vec![0.0; n * n];
        let mut interference = vec![0.0; n * n];
        for sc in 0..nc {
            for u in 0..k {
                for j in 0..k {
                    let at = (sc * k + u) * n + sc * k + j;
                    if u == j {
                        signal[at] = 1.0;
                    } else {
                        interference[at] = 1.0;
                    }
                }
            }
        }
        let sig = power.mul(&g.constant(Tensor::from_rows(n, n, signal)?))?.sum_axis(1)?;
        let int = power.mul(&g.constant(Tensor::from_rows(n, n, interference)?))?.sum_axis(1)?;
        let sinr = sig.div(&int.add_scalar(noise))?;
        Ok(sinr.add_scalar(1.0).ln().sum().scale(1.0 / (nc as f64 * LN_2)))
    }

    fn forward_impl<'g>(
        &self,
        g: &'g Graph,
        p: &Bound<'g>,
        sample: &EmCsiTensor,
        budget: &LinkBudget,
        choice: PatternChoice<'_>,
        differentiable: bool,
    ) -> Result<ForwardPass<'g>> {
        let inputs = self.check_sample(sample)?;
        let s2 = inputs.scale * inputs.scale;
        let stage = self.prn_forward(g, p, sample, choice)?;
        let h = self.gather_channel(g, sample, &stage, inputs.scale, differentiable)?;
        let anchor = svd_analog_init(&apply_pattern(sample, &stage.pattern)?, &self.mapping)?.analog;
        let phases = self.hbn_analog_forward(g, p, h.re, h.im, &anchor)?;
        let f_rf = self.analog_matrix(g, phases)?;
        let effective = h.matmul(&f_rf)?;
        let reg = self.num_users as f64 * budget.sigma2 * s2 / budget.pt_watts;
        let digital = self.hbn_digital_forward_scaled(g, p, &effective, &f_rf, reg, budget.pt_watts)?;
        let x = f_rf.matmul(&digital)?;
        let se = self.graph_sum_se(g, &h, &x, budget.sigma2 * s2)?;
        Ok(ForwardPass { pattern: stage, phases, digital_re: digital.re, digital_im: digital.im, se })
    }

    /// Differentiable forward pass (one-hot gather) used for training.
    pub fn forward<'g>(
        &self,
        g: &'g Graph,
        p: &Bound<'g>,
        sample: &EmCsiTensor,
        budget: &LinkBudget,
        choice: PatternChoice<'_>,
    ) -> Result<ForwardPass<'g>> {
        self.forward_impl(g, p, sample, budget, choice, true)
    }

    /// Forward pass with the integer gather, as used at inference.
    pub fn forward_inference<'g>(
        &self,
        g: &'g Graph,
        p: &Bound<'g>,
        sample: &EmCsiTensor,
        budget: &LinkBudget,
        choice: PatternChoice<'_>,
    ) -> Result<ForwardPass<'g>> {
        self.forward_impl(g, p, sample, budget, choice, false)
    }

    /// Converts a forward pass into a solution whose SE is recomputed
    /// outside the graph.
    pub fn to_solution(&self, sample: &EmCsiTensor, pass: &ForwardPass<'_>, budget: &LinkBudget) -> Result<BeamformingSolution> {
        let (nc, k) = (self.num_subcarriers, self.num_users);
        let n_rf = self.mapping.num_rf_chains();
        let analog = AnalogPrecoder::new(pass.phases.value().data().to_vec(), self.mapping.clone())?;
        let (re, im) = (pass.digital_re.value(), pass.digital_im.value());
        let width = nc * k;
        let mats = (0..nc)
            .map(|sc| {
                CMatrix::from_fn(n_rf, k, |r, u| {
                    let at = r * width + sc * k + u;
                    Complex64::new(re.data()[at], im.data()[at])
                })
            })
            .collect();
        let digital = DigitalPrecoderSet::new(mats)?;
        let channels = apply_pattern(sample, &pass.pattern.pattern)?;
        let achieved_se = sum_se(&channels, &analog, &digital, budget.sigma2)?;
        Ok(BeamformingSolution { pattern: pass.pattern.pattern.clone(), analog, digital, achieved_se })
    }

    /// Inference: one solution per sample.
    pub fn solve(&self, sample: &EmCsiTensor, budget: &LinkBudget, choice: PatternChoice<'_>) -> Result<BeamformingSolution> {
        let g = Graph::new();
        let p = self.store.bind(&g);
        let pass = self.forward_inference(&g, &p, sample, budget, choice)?;
        self.to_solution(sample, &pass, budget)
    }

    /// `(SE, gradients of −SE)` for one sample.
    pub fn sample_gradients(&self, sample: &EmCsiTensor, budget: &LinkBudget) -> Result<(f64, Vec<Vec<f64>>)> {
        let g = Graph::new();
        let p = self.store.bind(&g);
        let pass = self.forward(&g, &p, sample, budget, PatternChoice::Learned)?;
        let loss = pass.se.neg();
        let mut grads = g.backward(loss)?;
        Ok((pass.se.item(), p.collect(&mut grads)))
    }

    /// Mean negative SE over `batch` and its gradient. Samples run in
    /// parallel; their gradients are summed in index order, so the result
    /// does not depend on the number of workers.
    pub fn loss_and_gradients(&self, batch: &[&EmCsiTensor], budget: &LinkBudget) -> Result<BatchLoss> {
        if batch.is_empty() {
            return Err(Error::Shape("empty batch".into()));
        }
        let per: Vec<(f64, Vec<Vec<f64>>)> =
            batch.par_iter().map(|s| self.sample_gradients(s, budget)).collect::<Result<_>>()?;
        let n = batch.len() as f64;
        let mut grads = self.store.zero_grads();
        let mut se = 0.0;
        for (s, gs) in &per {
            se += s;
            for (acc, g) in grads.iter_mut().zip(gs) {
                acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
        }
        grads.iter_mut().flatten().for_each(|v| *v /= n);
        Ok(BatchLoss { loss: -se / n, mean_se: se / n, grads })
    }

    /// Mean negative SE of `batch` as a graph node.
    pub fn loss<'g>(
        &self,
        g: &'g Graph,
        p: &Bound<'g>,
        batch: &[&EmCsiTensor],
        budget: &LinkBudget,
    ) -> Result<DiffTensor<'g>> {
        if batch.is_empty() {
            return Err(Error::Shape("empty batch".into()));
        }
        let ses = batch
            .iter()
            .map(|s| self.forward(g, p, s, budget, PatternChoice::Learned).map(|f| f.se.reshape(&[1, 1])))
            .collect::<Result<Result<Vec<_>>>>()??;
        Ok(g.concat(&ses, 0)?.mean().neg())
    }
}

/// Result of [`PrHbfNet::loss_and_gradients`].
#[derive(Debug, Clone)]
pub struct BatchLoss {
    pub loss: f64,
    pub mean_se: f64,
    /// Gradient of `loss` in parameter-store order.
    pub grads: Vec<Vec<f64>>,
}
