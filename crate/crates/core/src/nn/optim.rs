use serde::{Deserialize, Serialize};

use super::layers::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore) -> Self {
        Self::with_moments(store, 0.9, 0.999, 1e-8)
    }

    pub fn with_moments(store: &ParamStore, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { beta1, beta2, eps, step: 0, m: store.zero_grads(), v: store.zero_grads() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update with learning rate `lr`; `grads` is in store order.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Vec<f64>], lr: f64) -> Result<()> {
        if grads.len() != store.len() {
            return Err(Error::Shape(format!("{} gradients for {} parameters", grads.len(), store.len())));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, g) in grads.iter().enumerate() {
            let id = ParamId::from_index(i);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            if g.len() != m.len() {
                return Err(Error::Shape(format!("gradient {i} has {} values, want {}", g.len(), m.len())));
            }
            let w = store.data_mut(id);
            for j in 0..g.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                w[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Linear warm-up followed by inverse-square-root decay, peaking at
/// step `warmup_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarmupSchedule {
    pub peak_lr: f64,
    pub warmup_steps: u64,
}

impl WarmupSchedule {
    /// Learning rate at 1-based `step`.
    pub fn lr(&self, step: u64) -> f64 {
        let s = step.max(1) as f64;
        let w = self.warmup_steps.max(1) as f64;
        self.peak_lr * (s / w).min((w / s).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    #[test]
    fn first_step_moves_by_lr() {
        // bias correction makes the first update exactly lr·sign(g) up to eps
        let mut store = ParamStore::new();
        store.add("w", Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap());
        let mut opt = Adam::new(&store);
        opt.step(&mut store, &[vec![0.3, -4.0, 1e3]], 0.01).unwrap();
        let w = store.values().next().unwrap().data().to_vec();
        for (a, b) in w.iter().zip([0.99, -1.99, 0.49]) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
    }

    #[test]
    fn matches_reference_recursion() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::scalar(0.0));
        let mut opt = Adam::new(&store);
        let grads = [1.0, -0.5, 2.0, 0.25];
        let (mut m, mut v, mut w) = (0.0f64, 0.0f64, 0.0f64);
        for (t, g) in grads.iter().enumerate() {
            opt.step(&mut store, &[vec![*g]], 0.1).unwrap();
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t as i32 + 1));
            let vh = v / (1.0 - 0.999f64.powi(t as i32 + 1));
            w -= 0.1 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((store.values().next().unwrap().item() - w).abs() < 1e-14);
    }

    #[test]
    fn warmup_peaks_then_decays() {
        let s = WarmupSchedule { peak_lr: 1e-3, warmup_steps: 100 };
        assert!((s.lr(1) - 1e-5).abs() < 1e-18);
        assert!((s.lr(50) - 5e-4).abs() < 1e-15);
        assert_eq!(s.lr(100), 1e-3);
        assert!((s.lr(400) - 5e-4).abs() < 1e-15);
        assert!(s.lr(101) < s.lr(100));
    }

    #[test]
    fn gradient_count_checked() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::scalar(0.0));
        let mut opt = Adam::new(&store);
        assert!(opt.step(&mut store, &[], 0.1).is_err());
    }
}
