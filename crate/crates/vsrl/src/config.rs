//! Experiment configuration documents (JSON or TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use vsrl_core::interruption::{DsiOptions, InterruptionScheme};
use vsrl_core::learning::{AlgorithmKind, LearningRate};
use vsrl_core::{Operator, Strategy};

use crate::error::{HarnessError, Result};

/// An environment by name, with parameter overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    /// `cliff`, `three_state`, `grid` or `file`.
    pub name: String,
    #[serde(default, skip_serializing_if = "is_empty_object")]
    pub overrides: Value,
    /// MDP document for `file`, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

fn is_empty_object(v: &Value) -> bool {
    v.is_null() || v.as_object().is_some_and(|o| o.is_empty())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeSpec {
    /// The scheme shipped with the environment.
    Environment,
    Custom(InterruptionScheme<f64>),
}

/// Settings for the virtuous-safety report on a finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSpec {
    /// Defaults to the strategy's limit `psi`.
    pub declared_psi_inf: Option<f64>,
    pub psi_tolerance: f64,
    /// `R‡` for unsafe-action identification.
    pub reward_threshold: f64,
    pub negligible_prob: f64,
    pub nglie_horizon: u64,
    /// Defaults to `0.05 (r_max - r_min) / (1 - gamma)`.
    pub distance_tolerance: Option<f64>,
    /// Row used by the resilience sweep; `[|A| - 1, ..., 1, 0]` when unset.
    pub resilience_row: Option<Vec<f64>>,
    pub dsi: DsiOptions,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        Self {
            declared_psi_inf: None,
            psi_tolerance: 0.01,
            reward_threshold: -50.0,
            negligible_prob: 1e-6,
            nglie_horizon: 100_000,
            distance_tolerance: None,
            resilience_row: None,
            dsi: DsiOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub env: EnvSpec,
    pub algorithm: AlgorithmKind,
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<SchemeSpec>,
    pub learning_rate: LearningRate<f64>,
    /// Q-learning bootstrap; the strategy's live operator when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<Operator>,
    #[serde(default = "one")]
    pub episodes: u64,
    pub horizon: u64,
    pub seeds: Vec<u64>,
    /// Global step counts at which metrics are recorded.
    #[serde(default)]
    pub checkpoints: Vec<u64>,
    /// Stop learning from this step on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freeze_learning_at: Option<u64>,
    /// Write every `trace_every`-th transition to the trace; 0 disables it.
    #[serde(default = "one")]
    pub trace_every: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub analysis: AnalysisSpec,
}

fn one() -> u64 {
    1
}

fn bad(path: &str, reason: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        path: path.to_string(),
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    /// Parses JSON or TOML, chosen by extension (`.toml`) or by content.
    pub fn from_str_any(text: &str, toml_hint: bool) -> Result<Self> {
        let value: Value = if toml_hint {
            toml::from_str(text).map_err(|e| bad("", e.to_string()))?
        } else {
            match serde_json::from_str(text) {
                Ok(v) => v,
                Err(json_err) => toml::from_str(text).map_err(|_| bad("", json_err.to_string()))?,
            }
        };
        let config: Self = decode(value)?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; a relative `env.path` is resolved against it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let toml_hint = path.extension().is_some_and(|e| e == "toml");
        let mut config = Self::from_str_any(&text, toml_hint)?;
        if let (Some(p), Some(dir)) = (&config.env.path, path.parent()) {
            if p.is_relative() {
                config.env.path = Some(dir.join(p));
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(bad("seeds", "at least one seed is required"));
        }
        if self.horizon == 0 {
            return Err(bad("horizon", "must be at least 1"));
        }
        if self.episodes == 0 {
            return Err(bad("episodes", "must be at least 1"));
        }
        let total = self.total_steps();
        if let Some(&c) = self.checkpoints.iter().find(|&&c| c == 0 || c > total) {
            return Err(bad("checkpoints", format!("{c} outside 1..={total}")));
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("checkpoints", "must be strictly increasing"));
        }
        self.learning_rate
            .validate()
            .map_err(|e| bad("learning_rate", e.to_string()))?;
        let a = &self.analysis;
        if !(a.psi_tolerance > 0.0) {
            return Err(bad("analysis.psi_tolerance", "must be positive"));
        }
        if !(a.negligible_prob >= 0.0 && a.negligible_prob < 1.0) {
            return Err(bad("analysis.negligible_prob", "must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Upper bound on the number of steps a run takes.
    pub fn total_steps(&self) -> u64 {
        self.episodes.saturating_mul(self.horizon)
    }

    /// Checkpoints, or the final step when none are given.
    pub fn effective_checkpoints(&self) -> Vec<u64> {
        if self.checkpoints.is_empty() {
            vec![self.total_steps()]
        } else {
            self.checkpoints.clone()
        }
    }

    /// Canonical JSON used for hashing and for the run directory copy.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn with_seeds(mut self, seeds: Vec<u64>) -> Self {
        self.seeds = seeds;
        self
    }

    /// The operator the oracle is solved for when no override is configured.
    pub fn limit_operator(&self, observation: usize, n_actions: usize) -> Result<Operator> {
        match &self.operator {
            Some(op) => Ok(op.clone()),
            None => self
                .strategy
                .limit_operator(observation, n_actions)
                .map_err(|e| bad("strategy", e.to_string())),
        }
    }
}

/// Deserializes a JSON value, reporting the failing field path.
pub(crate) fn decode<T: serde::de::DeserializeOwned>(value: Value) -> Result<T> {
    let text = value.to_string();
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| bad(&e.path().to_string(), e.inner().to_string()))
}
