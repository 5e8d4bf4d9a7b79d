//! Benchmark configuration, read from TOML with dotted-key overrides.

use std::path::Path;

use ratiomi_core::critics::CriticSpec;
use ratiomi_core::objectives::{EvalMode, Family, ObjectiveSpec};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    /// Coordinate-wise correlated standard normals.
    Gaussian,
    /// As `Gaussian` with `y` replaced by `y^3`.
    GaussianCubic,
    /// One-hot pairs drawn from `joint_table`.
    Discrete,
}

/// One training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    #[serde(default = "default_data")]
    pub data: DataKind,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_target")]
    pub target_mi_bits: f64,
    /// Row-major joint probability table for `discrete` data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_table: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub critic: CriticSpec,
    #[serde(default = "default_objective")]
    pub objective: ObjectiveSpec,
    #[serde(default)]
    pub eval_mode: EvalMode,
    #[serde(default = "default_eval_batches")]
    pub eval_batches: usize,
    #[serde(default = "default_report_every")]
    pub report_every: usize,
}

fn default_data() -> DataKind {
    DataKind::Gaussian
}
fn default_dim() -> usize {
    10
}
fn default_target() -> f64 {
    2.0
}
fn default_batch() -> usize {
    64
}
fn default_steps() -> usize {
    20_000
}
fn default_lr() -> f64 {
    1e-4
}
fn default_objective() -> ObjectiveSpec {
    ObjectiveSpec::new(Family::InfonceAnchor)
}
fn default_eval_batches() -> usize {
    4
}
fn default_report_every() -> usize {
    200
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            data: default_data(),
            dim: default_dim(),
            target_mi_bits: default_target(),
            joint_table: None,
            batch_size: default_batch(),
            steps: default_steps(),
            seed: 0,
            learning_rate: default_lr(),
            critic: CriticSpec::default(),
            objective: default_objective(),
            eval_mode: EvalMode::default(),
            eval_batches: default_eval_batches(),
            report_every: default_report_every(),
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.dim == 0 {
            return bad("dim must be at least 1".into());
        }
        match self.data {
            DataKind::Gaussian | DataKind::GaussianCubic => {
                if !(self.target_mi_bits > 0.0) || !self.target_mi_bits.is_finite() {
                    return bad(format!("target_mi_bits must be positive, got {}", self.target_mi_bits));
                }
            }
            DataKind::Discrete => {
                if self.joint_table.is_none() {
                    return bad("discrete data needs joint_table".into());
                }
            }
        }
        if self.steps == 0 || self.eval_batches == 0 || self.report_every == 0 {
            return bad("steps, eval_batches and report_every must be positive".into());
        }
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        self.critic.validate()?;
        self.objective.validate(self.batch_size)?;
        Ok(())
    }

    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: toml::Value = toml::from_str(text)?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let config: Self = value.try_into()?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path, overrides: &[String]) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?, overrides)
    }
}

/// Applies `a.b.c=value` to a TOML tree. The value is parsed as TOML and
/// falls back to a bare string, so `objective.family=infonce` works unquoted.
pub fn apply_override(root: &mut toml::Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("override '{assignment}' is not key=value")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let keys: Vec<&str> = path.trim().split('.').collect();
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| HarnessError::Config(format!("'{path}' descends into a non-table")))?;
        node = table.entry(key.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
    }
    node.as_table_mut()
        .ok_or_else(|| HarnessError::Config(format!("'{path}' descends into a non-table")))?
        .insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

/// A grid of runs: every objective at every target for every seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default)]
    pub base: BenchmarkConfig,
    #[serde(default)]
    pub objectives: Vec<SuiteObjective>,
    #[serde(default)]
    pub targets: Vec<f64>,
    #[serde(default)]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteObjective {
    /// Row label; defaults to the family name.
    #[serde(default)]
    pub label: Option<String>,
    pub objective: ObjectiveSpec,
    #[serde(default)]
    pub eval_mode: Option<EvalMode>,
}

impl SuiteObjective {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.objective.family.name().to_string())
    }
}

impl SuiteConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: toml::Value = toml::from_str(text)?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Ok(value.try_into()?)
    }

    pub fn from_file(path: &Path, overrides: &[String]) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?, overrides)
    }

    /// Every `(label, config)` cell, objectives outermost and seeds innermost.
    pub fn cells(&self) -> Vec<(String, BenchmarkConfig)> {
        let mut out = Vec::new();
        for obj in &self.objectives {
            for &target in &self.targets {
                for &seed in &self.seeds {
                    let mut c = self.base.clone();
                    c.objective = obj.objective.clone();
                    c.eval_mode = obj.eval_mode.unwrap_or(c.eval_mode);
                    c.target_mi_bits = target;
                    c.seed = seed;
                    out.push((obj.label(), c));
                }
            }
        }
        out
    }
}
