use alloc::format;
use alloc::vec::Vec;

use super::{Gradients, ParamStore};
#[allow(unused_imports)]
use crate::numeric::Float;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam with bias-corrected first and second moments.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step_count: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> =
            params.tensors().iter().map(|t| alloc::vec![0.0; t.value().len()]).collect();
        Self { config, first_moment: zeros.clone(), second_moment: zeros, step_count: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.second_moment
    }

    /// Applies one update. Any NaN/Inf gradient aborts before touching the
    /// parameters.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::Dimension {
                op: "adam step",
                expected: (params.len(), 1),
                found: (grads.len(), 1),
            });
        }
        for (i, g) in grads.tensors().iter().enumerate() {
            if g.shape() != params.get(i).shape() {
                return Err(Error::Dimension {
                    op: "adam step",
                    expected: params.get(i).shape(),
                    found: g.shape(),
                });
            }
            if !g.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite gradient for parameter '{}'",
                    params.name(i)
                )));
            }
        }
        self.step_count += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let t = self.step_count as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (i, g) in grads.tensors().iter().enumerate() {
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            let p = params.values_mut(i);
            for (((p, m), v), &g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.as_slice()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                if m_hat != 0.0 {
                    *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                }
            }
        }
        if let Some(name) = params.first_non_finite() {
            return Err(Error::Numeric(format!("parameter '{name}' became non-finite")));
        }
        Ok(())
    }
}
