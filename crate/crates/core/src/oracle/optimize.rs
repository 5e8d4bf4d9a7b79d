use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[allow(unused_imports)]
use crate::numeric::Float;
use super::{population_loss_grad, DiscretePair, TabularCritic};
use crate::error::{numeric, Result};
use crate::scoring::GeneratingFunction;

/// Settings for [`minimize_tabular`] and [`brute_force_optimum`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    pub max_iter: usize,
    /// Stop once the gradient norm falls below this.
    pub tol: f64,
    /// A returned optimum must have a gradient norm below this.
    pub accept: f64,
    /// Starts: the first at `log r = 0`, the rest uniform in `[-spread, spread]`.
    pub restarts: usize,
    pub spread: f64,
    pub seed: u64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self { max_iter: 100_000, tol: 1e-10, accept: 1e-8, restarts: 3, spread: 1.0, seed: 0 }
    }
}

/// Result of a full-batch descent over `log r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub log_r: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

impl Minimum {
    pub fn critic(&self) -> Result<TabularCritic> {
        TabularCritic::from_log(&self.log_r)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Gradient descent from `x0` with Barzilai-Borwein step proposals and
/// Armijo backtracking. Near the optimum, where the loss is flat to rounding,
/// a step is also accepted if it does not raise the loss beyond rounding and
/// shrinks the gradient.
pub fn minimize_tabular<F>(x0: Vec<f64>, mut f: F, options: &MinimizeOptions) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut x = x0;
    let (mut value, mut grad) = f(&x)?;
    if !value.is_finite() {
        return Err(numeric(format!("objective is {value} at the starting point")));
    }
    let mut step = 1.0;
    let mut iterations = 0;
    let mut candidate = vec![0.0; x.len()];
    while iterations < options.max_iter {
        let g_norm = norm(&grad);
        if g_norm < options.tol {
            break;
        }
        let mut accepted = None;
        let mut t = step;
        for _ in 0..80 {
            for ((c, xi), gi) in candidate.iter_mut().zip(&x).zip(&grad) {
                *c = xi - t * gi;
            }
            if let Ok((v, g)) = f(&candidate) {
                let armijo = v <= value - 1e-4 * t * g_norm * g_norm;
                let flat = v - value <= 1e-13 * (1.0 + value.abs()) && norm(&g) < g_norm;
                if v.is_finite() && (armijo || flat) {
                    accepted = Some((v, g));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((v, g)) = accepted else { break };
        let mut ss = 0.0;
        let mut sy = 0.0;
        for i in 0..x.len() {
            let s = candidate[i] - x[i];
            ss += s * s;
            sy += s * (g[i] - grad[i]);
        }
        step = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e6) } else { (2.0 * t).min(1e6) };
        x.copy_from_slice(&candidate);
        value = v;
        grad = g;
        iterations += 1;
    }
    Ok(Minimum { grad_norm: norm(&grad), log_r: x, value, iterations })
}

/// Best of several descents over `log r` on `start` points.
pub fn minimize_with_restarts<F>(n: usize, mut f: F, options: &MinimizeOptions) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut best: Option<Minimum> = None;
    for start in 0..options.restarts.max(1) {
        let x0 = if start == 0 {
            vec![0.0; n]
        } else {
            (0..n).map(|_| rng.gen_range(-options.spread..=options.spread)).collect()
        };
        let m = minimize_tabular(x0, &mut f, options)?;
        if best.as_ref().map_or(true, |b| m.value < b.value) {
            best = Some(m);
        }
    }
    let best = best.expect("at least one start");
    if !(best.grad_norm < options.accept) {
        return Err(numeric(format!(
            "descent stalled with gradient norm {:e} after {} iterations",
            best.grad_norm, best.iterations
        )));
    }
    Ok(best)
}

/// Global minimiser of the exact anchored population loss over tabular critics.
pub fn brute_force_optimum(
    pair: &DiscretePair,
    k: usize,
    nu: f64,
    rule: &GeneratingFunction,
    options: &MinimizeOptions,
) -> Result<Minimum> {
    minimize_with_restarts(pair.alphabet_size(), |x| population_loss_grad(pair, k, nu, x, rule), options)
}
