//! Exact computations on finite alphabets.
//!
//! Everything here enumerates rather than samples, so it serves as ground
//! truth for the estimators. Enumerations over `x_{1:K}` refuse to run past
//! [`ENUMERATION_LIMIT`] weighted terms instead of approximating.
//! Divergences are returned in bits where the name says so and in nats
//! otherwise.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use core::f64::consts::LN_2;

use rand::Rng;

#[allow(unused_imports)]
use crate::numeric::Float;
use crate::error::{domain, Error, Result};
use crate::linalg::Matrix;
use crate::numeric::{log_sum_exp, nats_to_bits};
use crate::scoring::SimplexPoint;

mod optimize;
mod population;

pub use optimize::{brute_force_optimum, minimize_tabular, minimize_with_restarts, Minimum, MinimizeOptions};
pub use population::{
    bregman_gap, exact_population_loss, monte_carlo_population_loss, pair_loss, population_loss_grad, PairObjective,
};

#[cfg(test)]
mod tests;

/// Largest number of weighted terms an enumeration may visit.
pub const ENUMERATION_LIMIT: u128 = 10_000_000;

/// Two distributions on `{0, ..., n-1}` with `q0(x) > 0` wherever `q1(x) > 0`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DiscretePair {
    q1: Vec<f64>,
    q0: Vec<f64>,
}

fn check_distribution(p: &[f64], name: &str) -> Result<()> {
    if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(domain(format!("{name} has negative or non-finite entries")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(domain(format!("{name} sums to {total}, not 1")));
    }
    Ok(())
}

impl DiscretePair {
    pub fn new(q1: Vec<f64>, q0: Vec<f64>) -> Result<Self> {
        if q1.is_empty() || q1.len() != q0.len() {
            return Err(domain("q1 and q0 must be nonempty and of equal length"));
        }
        check_distribution(&q1, "q1")?;
        check_distribution(&q0, "q0")?;
        if let Some(x) = (0..q1.len()).find(|&x| q1[x] > 0.0 && q0[x] == 0.0) {
            return Err(domain(format!("q1 is not absolutely continuous w.r.t. q0 at x = {x}")));
        }
        Ok(Self { q1, q0 })
    }

    /// Normalises two nonnegative weight vectors.
    pub fn from_weights(w1: &[f64], w0: &[f64]) -> Result<Self> {
        let s1: f64 = w1.iter().sum();
        let s0: f64 = w0.iter().sum();
        if !(s1 > 0.0 && s0 > 0.0) {
            return Err(domain("weights must have positive sums"));
        }
        Self::new(w1.iter().map(|w| w / s1).collect(), w0.iter().map(|w| w / s0).collect())
    }

    /// `(p(x, y), p(x) p(y))` for a joint probability table, flattened row-major.
    pub fn from_joint(table: &Matrix) -> Result<Self> {
        check_distribution(table.as_slice(), "joint table")?;
        let (nx, ny) = table.shape();
        let px: Vec<f64> = (0..nx).map(|i| table.row(i).iter().sum()).collect();
        let py: Vec<f64> = (0..ny).map(|j| (0..nx).map(|i| table[(i, j)]).sum()).collect();
        let mut q0 = Vec::with_capacity(nx * ny);
        for a in &px {
            for b in &py {
                q0.push(a * b);
            }
        }
        let total: f64 = q0.iter().sum();
        q0.iter_mut().for_each(|v| *v /= total);
        let q1 = table.as_slice().to_vec();
        Self::new(q1, q0)
    }

    /// A random pair with every entry bounded away from zero.
    pub fn random(n: usize, rng: &mut impl Rng) -> Result<Self> {
        let w1: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let w0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        Self::from_weights(&w1, &w0)
    }

    pub fn alphabet_size(&self) -> usize {
        self.q1.len()
    }

    pub fn q1(&self) -> &[f64] {
        &self.q1
    }

    pub fn q0(&self) -> &[f64] {
        &self.q0
    }

    /// `q1 / q0`, with 1 on points outside the support of `q0` (never sampled).
    pub fn ratio(&self) -> Vec<f64> {
        self.q1.iter().zip(&self.q0).map(|(a, b)| if *b > 0.0 { a / b } else { 1.0 }).collect()
    }

    /// The true ratio as a critic; needs `q1 > 0` everywhere.
    pub fn ratio_critic(&self) -> Result<TabularCritic> {
        TabularCritic::new(self.ratio())
    }
}

/// A strictly positive ratio table `r(x)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TabularCritic {
    r: Vec<f64>,
}

impl TabularCritic {
    pub fn new(r: Vec<f64>) -> Result<Self> {
        if r.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(domain("tabular critic entries must be positive and finite"));
        }
        Ok(Self { r })
    }

    pub fn from_log(log_r: &[f64]) -> Result<Self> {
        Self::new(log_r.iter().map(|v| v.exp()).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.r
    }

    pub fn log_values(&self) -> Vec<f64> {
        self.r.iter().map(|v| v.ln()).collect()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.r.iter().map(|v| v * c).collect())
    }

    pub fn random(n: usize, spread: f64, rng: &mut impl Rng) -> Result<Self> {
        Self::from_log(&(0..n).map(|_| rng.gen_range(-spread..spread)).collect::<Vec<_>>())
    }
}

/// Posterior over `{anchor, 1, ..., K}`: `(nu, ratios...) / (nu + sum ratios)`.
pub fn exact_posterior(ratios: &[f64], nu: f64) -> Result<SimplexPoint> {
    if ratios.is_empty() {
        return Err(domain("at least one ratio is needed"));
    }
    if !(nu >= 0.0) || ratios.iter().any(|&r| !(r >= 0.0) || !r.is_finite()) || !nu.is_finite() {
        return Err(domain("ratios and nu must be finite and nonnegative"));
    }
    let total = nu + ratios.iter().sum::<f64>();
    if !(total > 0.0) {
        return Err(domain("nu and the ratios cannot all vanish"));
    }
    let mut eta = Vec::with_capacity(ratios.len() + 1);
    eta.push(nu / total);
    eta.extend(ratios.iter().map(|r| r / total));
    let s: f64 = eta.iter().sum();
    eta.iter_mut().for_each(|v| *v /= s);
    SimplexPoint::new(eta)
}

/// `KL(q1 || q0)` in bits.
pub fn exact_kl(pair: &DiscretePair) -> f64 {
    let nats: f64 = pair
        .q1
        .iter()
        .zip(&pair.q0)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a / b).ln())
        .sum();
    nats_to_bits(nats)
}

/// `chi^2(q1 || q0) = sum q1^2 / q0 - 1`.
pub fn exact_chi2(pair: &DiscretePair) -> f64 {
    pair.q1.iter().zip(&pair.q0).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * a / b).sum::<f64>() - 1.0
}

/// `min(log2 K, D - log2((2^D - 1) / K + 1))` for `D = KL` in bits.
pub fn theorem1_bound(kl_bits: f64, k: usize) -> Result<f64> {
    if !(kl_bits >= 0.0) {
        return Err(domain(format!("KL must be nonnegative, got {kl_bits}")));
    }
    if k == 0 {
        return Err(domain("K must be at least 1"));
    }
    let k = k as f64;
    let excess = (kl_bits * LN_2).exp_m1();
    Ok(k.log2().min(kl_bits - (excess / k).ln_1p() / LN_2))
}

/// Visits every `x_{1:K}` in `{0..n}^K` in lexicographic order.
pub(crate) fn for_each_tuple(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; k];
    loop {
        visit(&idx);
        let mut pos = k;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < n {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Errors unless `classes * n^K` fits in the enumeration budget.
pub(crate) fn check_budget(n: usize, k: usize, classes: usize) -> Result<()> {
    let terms = (n as u128)
        .checked_pow(k as u32)
        .and_then(|t| t.checked_mul(classes as u128))
        .unwrap_or(u128::MAX);
    if terms > ENUMERATION_LIMIT {
        return Err(Error::Budget { terms, limit: ENUMERATION_LIMIT });
    }
    Ok(())
}

/// `E_{x ~ q1 (x) q0^(K-1)}[log2(r(x_1) / ((1/K) sum_z r(x_z)))]`.
pub fn infonce_objective(pair: &DiscretePair, k: usize, critic: &TabularCritic) -> Result<f64> {
    let n = pair.alphabet_size();
    if k == 0 {
        return Err(domain("K must be at least 1"));
    }
    if critic.values().len() != n {
        return Err(domain("critic and alphabet sizes differ"));
    }
    check_budget(n, k, k)?;
    let log_r = critic.log_values();
    let mut total = 0.0;
    let mut logs = vec![0.0; k];
    for_each_tuple(n, k, |x| {
        let w = pair.q1[x[0]] * x[1..].iter().map(|&i| pair.q0[i]).product::<f64>();
        if w == 0.0 {
            return;
        }
        for (l, &i) in logs.iter_mut().zip(x) {
            *l = log_r[i];
        }
        total += w * (log_r[x[0]] - (log_sum_exp(&logs) - (k as f64).ln()));
    });
    Ok(nats_to_bits(total))
}

/// K-way Jensen-Shannon divergence in bits, as the expected log-ratio of
/// the first-slot-positive distribution to the uniform mixture.
pub fn exact_kjsd(pair: &DiscretePair, k: usize) -> Result<f64> {
    if pair.q1.contains(&0.0) {
        // the ratio form needs r* > 0 wherever q0 puts mass; use the mixture form
        return exact_kjsd_mixture(pair, k);
    }
    infonce_objective(pair, k, &pair.ratio_critic()?)
}

/// K-way Jensen-Shannon divergence in bits, as the average KL of each
/// slot-`z`-positive product distribution to their uniform mixture.
pub fn exact_kjsd_mixture(pair: &DiscretePair, k: usize) -> Result<f64> {
    let n = pair.alphabet_size();
    if k == 0 {
        return Err(domain("K must be at least 1"));
    }
    check_budget(n, k, k)?;
    let mut total = 0.0;
    let mut dens = vec![0.0; k];
    for_each_tuple(n, k, |x| {
        for z in 0..k {
            dens[z] = pair.q1[x[z]] * x.iter().enumerate().filter(|(i, _)| *i != z).map(|(_, &v)| pair.q0[v]).product::<f64>();
        }
        let mix: f64 = dens.iter().sum::<f64>() / k as f64;
        for &d in dens.iter() {
            if d > 0.0 {
                total += d * (d / mix).ln() / k as f64;
            }
        }
    });
    Ok(nats_to_bits(total))
}

/// `E_q1[log r]` in nats: the plug-in value at a tabular critic.
pub fn plug_in(pair: &DiscretePair, critic: &TabularCritic) -> f64 {
    pair.q1.iter().zip(critic.values()).filter(|(a, _)| **a > 0.0).map(|(a, r)| a * r.ln()).sum()
}
