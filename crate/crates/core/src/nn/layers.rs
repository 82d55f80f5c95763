use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{DiffTensor, Graph, Gradients};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }

    pub fn from_index(i: usize) -> Self {
        Self(i)
    }
}

/// Named trainable tensors. Values sit behind `Arc` so many graphs can
/// read them concurrently.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Arc<Tensor>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.values.push(Arc::new(value));
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> impl Iterator<Item = &Tensor> {
        self.values.iter().map(|v| v.as_ref())
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Replaces a parameter value; the shape must not change.
    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        if value.shape() != self.values[id.0].shape() {
            return Err(Error::Shape(format!(
                "parameter {} has shape {:?}, got {:?}",
                self.names[id.0],
                self.values[id.0].shape(),
                value.shape()
            )));
        }
        self.values[id.0] = Arc::new(value);
        Ok(())
    }

    /// Mutable access to the raw values, cloning if a graph still holds them.
    pub fn data_mut(&mut self, id: ParamId) -> &mut [f64] {
        Arc::make_mut(&mut self.values[id.0]).data_mut()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Registers every parameter as a trainable leaf of `graph`.
    pub fn bind<'g>(&self, graph: &'g Graph) -> Bound<'g> {
        Bound { params: self.values.iter().map(|v| graph.param(v.clone())).collect() }
    }

    /// Gradient buffers shaped like the store, all zero.
    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.values.iter().map(|v| vec![0.0; v.len()]).collect()
    }
}

/// Parameters of a [`ParamStore`] as leaves of one graph.
pub struct Bound<'g> {
    params: Vec<DiffTensor<'g>>,
}

impl<'g> Bound<'g> {
    pub fn get(&self, id: ParamId) -> DiffTensor<'g> {
        self.params[id.0]
    }

    /// Per-parameter gradients in store order.
    pub fn collect(&self, grads: &mut Gradients) -> Vec<Vec<f64>> {
        self.params
            .iter()
            .map(|p| grads.take(*p).unwrap_or_else(|| vec![0.0; p.value().len()]))
            .collect()
    }
}

/// Seeded initializer shared by layer constructors.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Glorot-uniform `(fan_in × fan_out)` matrix.
    pub fn xavier(&mut self, fan_in: usize, fan_out: usize) -> Tensor {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| self.rng.random_range(-a..a)).collect();
        Tensor::new(vec![fan_in, fan_out], data).expect("sized by construction")
    }

    pub fn uniform(&mut self, shape: &[usize], a: f64) -> Tensor {
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.rng.random_range(-a..a)).collect();
        Tensor::new(shape.to_vec(), data).expect("sized by construction")
    }
}

/// `y = x·W + b` applied to every row of `x`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, d_in: usize, d_out: usize) -> Self {
        let weight = store.add(format!("{name}.weight"), init.xavier(d_in, d_out));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[d_out]));
        Self { weight, bias, d_in, d_out }
    }

    /// All-zero weights and bias, so the layer starts as the zero map.
    pub fn zeros(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize) -> Self {
        let weight = store.add(format!("{name}.weight"), Tensor::zeros(&[d_in, d_out]));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[d_out]));
        Self { weight, bias, d_in, d_out }
    }

    pub fn forward<'g>(&self, p: &Bound<'g>, x: DiffTensor<'g>) -> Result<DiffTensor<'g>> {
        let n = x.value().dims2()?.0;
        let y = x.matmul(&p.get(self.weight))?;
        y.add(&p.get(self.bias).broadcast_rows(n)?)
    }
}

/// Row-wise layer normalization with learned gain and offset.
#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub offset: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, d: usize) -> Self {
        let gain = store.add(format!("{name}.gain"), Tensor::full(&[d], 1.0));
        let offset = store.add(format!("{name}.offset"), Tensor::zeros(&[d]));
        Self { gain, offset }
    }

    pub fn forward<'g>(&self, p: &Bound<'g>, x: DiffTensor<'g>) -> Result<DiffTensor<'g>> {
        let n = x.value().dims2()?.0;
        let z = x.layer_norm_rows()?;
        z.mul(&p.get(self.gain).broadcast_rows(n)?)?.add(&p.get(self.offset).broadcast_rows(n)?)
    }
}

/// Multi-head scaled dot-product self-attention over the rows of its input.
#[derive(Debug, Clone, Copy)]
pub struct SelfAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
}

impl SelfAttention {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, d_model: usize, heads: usize) -> Self {
        Self {
            query: Linear::new(store, init, &format!("{name}.query"), d_model, d_model),
            key: Linear::new(store, init, &format!("{name}.key"), d_model, d_model),
            value: Linear::new(store, init, &format!("{name}.value"), d_model, d_model),
            output: Linear::new(store, init, &format!("{name}.output"), d_model, d_model),
            heads,
        }
    }

    pub fn forward<'g>(&self, p: &Bound<'g>, x: DiffTensor<'g>) -> Result<DiffTensor<'g>> {
        let q = self.query.forward(p, x)?;
        let k = self.key.forward(p, x)?;
        let v = self.value.forward(p, x)?;
        let d = self.query.d_out;
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = q.slice_cols(h * dh, dh)?;
            let kh = k.slice_cols(h * dh, dh)?;
            let vh = v.slice_cols(h * dh, dh)?;
            let scores = qh.matmul(&kh.transpose()?)?.scale(scale);
            outs.push(scores.softmax_rows()?.matmul(&vh)?);
        }
        let merged = if outs.len() == 1 { outs[0] } else { x.graph().concat(&outs, 1)? };
        self.output.forward(p, merged)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, d_model: usize, d_ff: usize) -> Self {
        Self {
            up: Linear::new(store, init, &format!("{name}.up"), d_model, d_ff),
            down: Linear::new(store, init, &format!("{name}.down"), d_ff, d_model),
        }
    }

    pub fn forward<'g>(&self, p: &Bound<'g>, x: DiffTensor<'g>) -> Result<DiffTensor<'g>> {
        let h = self.up.forward(p, x)?.gelu();
        self.down.forward(p, h)
    }
}

/// Pre-norm encoder block: `x + attn(norm(x))`, then `x + ff(norm(x))`.
#[derive(Debug, Clone, Copy)]
pub struct EncoderLayer {
    pub norm_attn: LayerNorm,
    pub attn: SelfAttention,
    pub norm_ff: LayerNorm,
    pub ff: FeedForward,
}

impl EncoderLayer {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, cfg: &EncoderConfig) -> Self {
        Self {
            norm_attn: LayerNorm::new(store, &format!("{name}.norm_attn"), cfg.d_model),
            attn: SelfAttention::new(store, init, &format!("{name}.attn"), cfg.d_model, cfg.heads),
            norm_ff: LayerNorm::new(store, &format!("{name}.norm_ff"), cfg.d_model),
            ff: FeedForward::new(store, init, &format!("{name}.ff"), cfg.d_model, cfg.d_ff),
        }
    }

    pub fn forward<'g>(&self, p: &Bound<'g>, x: DiffTensor<'g>) -> Result<DiffTensor<'g>> {
        let a = self.attn.forward(p, self.norm_attn.forward(p, x)?)?;
        let x = x.add(&a)?;
        let f = self.ff.forward(p, self.norm_ff.forward(p, x)?)?;
        x.add(&f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub depth: usize,
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { depth: 2, d_model: 64, heads: 4, d_ff: 128 }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.d_model == 0 || self.heads == 0 || self.d_ff == 0 {
            return Err(Error::Config(format!("encoder sizes must be positive: {self:?}")));
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        Ok(())
    }
}

/// Stack of [`EncoderLayer`]s followed by a final layer norm.
#[derive(Debug, Clone)]
pub struct TransformerEncoder {
    pub layers: Vec<EncoderLayer>,
    pub final_norm: LayerNorm,
}

impl TransformerEncoder {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, cfg: &EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        let layers = (0..cfg.depth)
            .map(|i| EncoderLayer::new(store, init, &format!("{name}.layer{i}"), cfg))
            .collect();
        let final_norm = LayerNorm::new(store, &format!("{name}.final_norm"), cfg.d_model);
        Ok(Self { layers, final_norm })
    }

    pub fn forward<'g>(&self, p: &Bound<'g>, mut x: DiffTensor<'g>) -> Result<DiffTensor<'g>> {
        for layer in &self.layers {
            x = layer.forward(p, x)?;
        }
        self.final_norm.forward(p, x)
    }
}
