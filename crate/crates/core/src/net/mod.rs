//! Joint pattern-selection and hybrid-beamforming network, its training
//! loop and the solver comparison harness.

mod config;
mod eval;
mod model;
mod train;

pub use config::{default_pilot_count, pilot_indices, PrHbfNetConfig, TrainConfig};
pub use eval::{evaluate, evaluate_solutions, mean_refined_se, solve_sample, EvalReport, Solver};
pub use model::{
    BatchLoss, ForwardPass, PatternChoice, PatternStage, PrHbfNet, ANALOG_PREFIX, DIGITAL_PREFIX, PATTERN_PREFIX,
};
pub use train::{train, EpochSummary, StepRecord, TrainHistory, TrainOutcome};

#[cfg(test)]
mod tests;
