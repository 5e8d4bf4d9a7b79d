//! Run reports.

use serde::{Deserialize, Serialize};

use crate::config::BenchmarkConfig;

/// Number of trailing evaluation points averaged into the final estimate.
pub const FINAL_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    /// Training loss of the last minibatch before evaluation.
    pub loss: f64,
    pub mi_estimate_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub version: String,
    pub config: BenchmarkConfig,
    pub trajectory: Vec<TrajectoryPoint>,
    /// NaN (written as `null`) when no evaluation completed.
    #[serde(deserialize_with = "nan_from_null")]
    pub final_mi_bits: f64,
    pub ground_truth_bits: f64,
    pub estimator_type: u8,
    /// False when a plug-in estimate comes from an objective that pins the
    /// ratio only up to a factor.
    pub plug_in_consistent: bool,
    pub wall_time_s: f64,
}

impl EstimateReport {
    /// Mean of the last [`FINAL_WINDOW`] trajectory estimates (NaN if empty).
    pub fn window_mean(trajectory: &[TrajectoryPoint]) -> f64 {
        let tail = &trajectory[trajectory.len().saturating_sub(FINAL_WINDOW)..];
        tail.iter().map(|p| p.mi_estimate_bits).sum::<f64>() / tail.len() as f64
    }
}

fn nan_from_null<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

pub fn version() -> &'static str {
    env!("RATIOMI_VERSION")
}
