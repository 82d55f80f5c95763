use rayon::prelude::*;

use super::model::{PatternChoice, PrHbfNet};
use crate::baselines::{
    exhaustive_pattern_select, fixed_pattern, greedy_pattern_select, greedy_search, random_pattern, GreedyConfig,
    HbfContext,
};
use crate::channel::EmCsiTensor;
use crate::config::LinkBudget;
use crate::error::{Error, Result};
use crate::precoding::BeamformingSolution;

/// Pattern and precoder solvers that can be compared on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Solver {
    /// Trained network, one forward pass per sample.
    PrHbfNet,
    /// Coordinate-wise greedy search over classical anchor solutions.
    Greedy(GreedyConfig),
    /// Greedy search whose candidates are scored and solved by the
    /// network's refinement branches.
    GreedyHbfNet(GreedyConfig),
    Exhaustive { cap: u64 },
    /// Uniform random pattern; sample `i` uses seed `seed + i`.
    Random { seed: u64 },
    Fixed { mode: usize },
}

impl Solver {
    pub fn name(&self) -> &'static str {
        match self {
            Solver::PrHbfNet => "prhbfnet",
            Solver::Greedy(_) => "greedy",
            Solver::GreedyHbfNet(_) => "greedy-hbfnet",
            Solver::Exhaustive { .. } => "exhaustive",
            Solver::Random { .. } => "random",
            Solver::Fixed { .. } => "fixed",
        }
    }

    pub fn needs_model(&self) -> bool {
        matches!(self, Solver::PrHbfNet | Solver::GreedyHbfNet(_))
    }
}

/// Solves sample `index` of a dataset.
pub fn solve_sample(
    sample: &EmCsiTensor,
    index: usize,
    solver: &Solver,
    ctx: &HbfContext,
    model: Option<&PrHbfNet>,
) -> Result<BeamformingSolution> {
    let need = || model.ok_or_else(|| Error::Config(format!("solver {} needs a trained network", solver.name())));
    if let Some(m) = model.filter(|_| solver.needs_model()) {
        if m.mapping() != &ctx.mapping {
            return Err(Error::Config("network and context disagree on the subarray mapping".into()));
        }
    }
    match solver {
        Solver::PrHbfNet => need()?.solve(sample, &ctx.budget, PatternChoice::Learned),
        Solver::Greedy(g) => greedy_pattern_select(sample, g, ctx),
        Solver::GreedyHbfNet(g) => {
            let net = need()?;
            let found = greedy_search(sample.num_antennas(), sample.num_patterns(), g, |c| {
                net.solve(sample, &ctx.budget, PatternChoice::Given(c))
            })?;
            Ok(found.best)
        }
        Solver::Exhaustive { cap } => exhaustive_pattern_select(sample, ctx, *cap),
        Solver::Random { seed } => random_pattern(sample, ctx, seed.wrapping_add(index as u64)),
        Solver::Fixed { mode } => fixed_pattern(sample, ctx, *mode),
    }
}

/// Per-sample SE and summary statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_sample: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; 0 for fewer than two samples.
    pub std: f64,
}

impl EvalReport {
    pub fn from_values(per_sample: Vec<f64>) -> Self {
        let n = per_sample.len();
        let mean = if n == 0 { f64::NAN } else { per_sample.iter().sum::<f64>() / n as f64 };
        let std = if n < 2 {
            0.0
        } else {
            (per_sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { per_sample, mean, std }
    }
}

/// Solves every sample in parallel; results keep dataset order.
pub fn evaluate_solutions(
    samples: &[EmCsiTensor],
    solver: &Solver,
    ctx: &HbfContext,
    model: Option<&PrHbfNet>,
) -> Result<Vec<BeamformingSolution>> {
    samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| solve_sample(s, i, solver, ctx, model))
        .collect()
}

pub fn evaluate(samples: &[EmCsiTensor], solver: &Solver, ctx: &HbfContext, model: Option<&PrHbfNet>) -> Result<EvalReport> {
    let sols = evaluate_solutions(samples, solver, ctx, model)?;
    Ok(EvalReport::from_values(sols.iter().map(|s| s.achieved_se).collect()))
}

/// Mean SE of the network's own solutions.
pub fn mean_refined_se(model: &PrHbfNet, samples: &[EmCsiTensor], budget: &LinkBudget) -> Result<f64> {
    let ses: Vec<f64> = samples
        .par_iter()
        .map(|s| model.solve(s, budget, PatternChoice::Learned).map(|sol| sol.achieved_se))
        .collect::<Result<_>>()?;
    Ok(ses.iter().sum::<f64>() / ses.len().max(1) as f64)
}
