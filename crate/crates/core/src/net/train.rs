use std::io::Write;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::eval::mean_refined_se;
use super::model::{PrHbfNet, PATTERN_PREFIX};
use crate::channel::EmCsiTensor;
use crate::config::LinkBudget;
use crate::error::{Error, Result};
use crate::nn::{Adam, ParamStore, WarmupSchedule};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub lr: f64,
    /// Mean negative SE of the batch.
    pub loss: f64,
    pub mean_se: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
    /// Mean validation SE after each epoch.
    pub epoch_val_se: Vec<f64>,
}

impl TrainHistory {
    /// Mean training loss of each epoch, given the steps per epoch.
    pub fn epoch_mean_loss(&self, steps_per_epoch: usize) -> Vec<f64> {
        self.steps
            .chunks(steps_per_epoch.max(1))
            .map(|c| c.iter().map(|s| s.loss).sum::<f64>() / c.len() as f64)
            .collect()
    }

    /// CSV with columns `step,lr,loss,mean_se`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "step,lr,loss,mean_se")?;
        for s in &self.steps {
            writeln!(w, "{},{:.12},{:.12},{:.12}", s.step, s.lr, s.loss, s.mean_se)?;
        }
        Ok(())
    }
}

/// Summary handed to the progress callback after each epoch.
#[derive(Debug, Clone, Copy)]
pub struct EpochSummary {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_se: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the best validation SE, the initial ones included.
    pub best: ParamStore,
    pub best_val_se: f64,
    /// 0 when no epoch beat the initial parameters.
    pub best_epoch: usize,
    pub last: ParamStore,
    pub initial_val_se: f64,
    pub history: TrainHistory,
}

/// Reorders users and gives each one a common random phase. The anchors and
/// the SE are invariant to both, so this only changes what the encoders see.
fn augment_sample(sample: &EmCsiTensor, rng: &mut ChaCha8Rng) -> Result<EmCsiTensor> {
    let [nc, k, nt, np] = sample.dims();
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(rng);
    let phases: Vec<Complex64> =
        (0..k).map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))).collect();
    let mut data = Vec::with_capacity(sample.data().len());
    for g in 0..nc {
        for (u, &src) in order.iter().enumerate() {
            let start = sample.offset(g, src, 0, 0);
            data.extend(sample.data()[start..start + nt * np].iter().map(|z| z * phases[u]));
        }
    }
    EmCsiTensor::from_parts([nc, k, nt, np], data, sample.subcarrier_freqs().to_vec())
}

/// Trains `model` in place with Adam and the warm-up schedule; `model`
/// ends holding the last parameters.
pub fn train(
    model: &mut PrHbfNet,
    train_set: &[EmCsiTensor],
    val_set: &[EmCsiTensor],
    budget: &LinkBudget,
    cfg: &TrainConfig,
    mut progress: impl FnMut(&EpochSummary),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.epochs > 0 && train_set.is_empty() {
        return Err(Error::Shape("empty training set".into()));
    }
    let initial_val_se = if val_set.is_empty() { f64::NAN } else { mean_refined_se(model, val_set, budget)? };
    let mut best = model.params().clone();
    let mut best_val_se = initial_val_se;
    let mut best_epoch = 0;
    let mut history = TrainHistory::default();
    let mut opt = Adam::new(model.params());
    let schedule = WarmupSchedule { peak_lr: cfg.peak_lr, warmup_steps: cfg.warmup_steps };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut aug_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    aug_rng.set_stream(1);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let pattern_mask: Vec<bool> = model.params().names().iter().map(|n| n.starts_with(PATTERN_PREFIX)).collect();
    let mut step = 0u64;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        // stage-wise: pattern encoder first, refinement encoders second
        let train_pattern = !cfg.stagewise || epoch <= cfg.epochs.div_ceil(2);
        let train_refine = !cfg.stagewise || !train_pattern;
        if cfg.stagewise && epoch == cfg.epochs.div_ceil(2) + 1 {
            // fresh moments so the frozen group stops moving
            opt = Adam::new(model.params());
        }
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let augmented: Vec<EmCsiTensor> = if cfg.augment {
                chunk.iter().map(|&i| augment_sample(&train_set[i], &mut aug_rng)).collect::<Result<_>>()?
            } else {
                Vec::new()
            };
            let batch: Vec<&EmCsiTensor> = if cfg.augment {
                augmented.iter().collect()
            } else {
                chunk.iter().map(|&i| &train_set[i]).collect()
            };
            let mut out = model.loss_and_gradients(&batch, budget)?;
            for (g, &is_pattern) in out.grads.iter_mut().zip(&pattern_mask) {
                if (is_pattern && !train_pattern) || (!is_pattern && !train_refine) {
                    g.iter_mut().for_each(|v| *v = 0.0);
                }
            }
            step += 1;
            let lr = schedule.lr(step);
            opt.step(model.params_mut(), &out.grads, lr)?;
            history.steps.push(StepRecord { step, lr, loss: out.loss, mean_se: out.mean_se });
            loss_sum += out.loss;
            batches += 1;
        }
        let val_se = if val_set.is_empty() { f64::NAN } else { mean_refined_se(model, val_set, budget)? };
        history.epoch_val_se.push(val_se);
        if val_se > best_val_se || best_val_se.is_nan() {
            best_val_se = val_se;
            best = model.params().clone();
            best_epoch = epoch;
        }
        progress(&EpochSummary { epoch, mean_loss: loss_sum / batches.max(1) as f64, val_se });
    }
    Ok(TrainOutcome { best, best_val_se, best_epoch, last: model.params().clone(), initial_val_se, history })
}
