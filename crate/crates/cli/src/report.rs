//! JSON report written by `simulate`.
//!
//! ```json
//! {
//!   "tool": { "name": "bell-lab", "version": "0.1.0" },
//!   "config_digest": "<sha256 of the canonical config TOML>",
//!   "seed": 42,
//!   "n_trials": 1000,
//!   "model": { "kind": "...", "source": { "kind": "..." }, "noise": 0.1 },
//!   "quad_degrees": { "a": 0.0, "b": 45.0, "c": 135.0, "d": 90.0 },
//!   "per_pair": [ { "pair_id": 0, "mean": ..., "std_error": ..., "count": ... }, ... ],
//!   "chsh": { "value": ..., "std_error": ... },
//!   "flags": { "setting_dependent_distribution": false }
//! }
//! ```
//!
//! Pairs are in the order (a,c), (a,b), (d,b), (d,c) and Δ is
//! `E₀ − E₁ − E₂ − E₃`. The report carries no timestamps or paths, so
//! identical inputs give identical bytes.

use bell_lab::simulate::ModelFlags;
use bell_lab::{ChshStatistic, CorrelationEstimate, ModelSpec};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, QuadDegrees};

pub const TOOL_NAME: &str = "bell-lab";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl ToolInfo {
    pub fn current() -> Self {
        Self {
            name: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshSummary {
    pub value: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub tool: ToolInfo,
    pub config_digest: String,
    pub seed: u64,
    pub n_trials: u64,
    pub model: ModelSpec,
    pub quad_degrees: QuadDegrees,
    pub per_pair: [CorrelationEstimate; 4],
    pub chsh: ChshSummary,
    pub flags: ModelFlags,
}

impl SimulationReport {
    pub fn new(config: &ExperimentConfig, stat: &ChshStatistic) -> Self {
        Self {
            tool: ToolInfo::current(),
            config_digest: config.digest(),
            seed: config.seed.0,
            n_trials: config.n_trials,
            model: config.model.clone(),
            quad_degrees: config.quad,
            per_pair: stat.per_pair,
            chsh: ChshSummary {
                value: stat.value,
                std_error: stat.std_error,
            },
            flags: stat.flags,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
