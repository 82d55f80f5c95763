use std::path::Path;

use anyhow::Context;
use rpahbf::baselines::{GreedyConfig, DEFAULT_EXHAUSTIVE_CAP};
use rpahbf::net::{PrHbfNetConfig, TrainConfig};
use rpahbf::{Error, SystemConfig};
use serde::{Deserialize, Serialize};

/// Greedy search settings as they appear in the run file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GreedySection {
    pub max_sweeps: usize,
    pub improvement_tol: f64,
}

impl Default for GreedySection {
    fn default() -> Self {
        let g = GreedyConfig::default();
        Self { max_sweeps: g.max_sweeps, improvement_tol: g.improvement_tol }
    }
}

impl GreedySection {
    pub fn to_core(&self) -> GreedyConfig {
        GreedyConfig { max_sweeps: self.max_sweeps, improvement_tol: self.improvement_tol }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub exhaustive_cap: u64,
    pub random_seed: u64,
    pub fixed_mode: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { exhaustive_cap: DEFAULT_EXHAUSTIVE_CAP, random_seed: 0, fixed_mode: 1 }
    }
}

/// Everything a command can be configured with. Every section and key is
/// optional; missing values fall back to the desk defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub network: PrHbfNetConfig,
    pub training: TrainConfig,
    pub greedy: GreedySection,
    pub eval: EvalSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> rpahbf::Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.system.validate()?;
        cfg.network.validate()?;
        cfg.training.validate()?;
        cfg.greedy.to_core().validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> anyhow::Result<(Self, String)> {
        let Some(path) = path else {
            let cfg = Self::default();
            let text = cfg.to_toml();
            return Ok((cfg, text));
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg = Self::from_toml(&text).with_context(|| format!("in {}", path.display()))?;
        Ok((cfg, text))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}
