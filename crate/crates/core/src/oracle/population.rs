use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

#[allow(unused_imports)]
use crate::numeric::Float;
use super::{check_budget, for_each_tuple, DiscretePair, TabularCritic};
use crate::error::{config, domain, Result};
use crate::numeric::{sigmoid, softplus};
use crate::objectives::classes::{class_loss, ClassScratch};
use crate::scoring::{bregman, GeneratingFunction};

fn check_setup(pair: &DiscretePair, k: usize, nu: f64, log_r: &[f64], rule: &GeneratingFunction) -> Result<()> {
    rule.validate()?;
    if k == 0 {
        return Err(domain("K must be at least 1"));
    }
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(config(format!("nu must be finite and nonnegative, got {nu}")));
    }
    if nu == 0.0 && (k < 2 || !rule.is_symmetric()) {
        return Err(config("nu = 0 needs K >= 2 and a symmetric rule"));
    }
    if log_r.len() != pair.alphabet_size() {
        return Err(domain("critic and alphabet sizes differ"));
    }
    check_budget(pair.alphabet_size(), k, k + 1)
}

/// Exact anchored population loss `E_{p(z, x_{1:K})}[lambda_z(eta_theta(x_{1:K}))]`
/// in nats and its gradient with respect to `log r`.
///
/// Class `z = 0` (prior `nu / (K + nu)`) draws every slot from `q0`; class
/// `z >= 1` (prior `1 / (K + nu)`) draws slot `z` from `q1`. With `nu = 0`
/// the anchor class is dropped and the rule acts on `K` classes.
pub fn population_loss_grad(
    pair: &DiscretePair,
    k: usize,
    nu: f64,
    log_r: &[f64],
    rule: &GeneratingFunction,
) -> Result<(f64, Vec<f64>)> {
    check_setup(pair, k, nu, log_r, rule)?;
    let (q1, q0) = (pair.q1(), pair.q0());
    let ln_nu = (nu > 0.0).then(|| nu.ln());
    let prior_anchor = nu / (k as f64 + nu);
    let prior_slot = 1.0 / (k as f64 + nu);
    let mut grad = vec![0.0; log_r.len()];
    let mut logits = vec![0.0; k];
    let mut g = vec![0.0; k];
    let mut scratch = ClassScratch::default();
    let mut total = 0.0;
    for_each_tuple(pair.alphabet_size(), k, |x| {
        for (l, &i) in logits.iter_mut().zip(x) {
            *l = log_r[i];
        }
        let base: f64 = x.iter().map(|&i| q0[i]).product();
        if ln_nu.is_some() && base > 0.0 {
            let w = prior_anchor * base;
            total += w * class_loss(rule, ln_nu, &logits, None, false, &mut scratch, &mut g);
            for (&i, gi) in x.iter().zip(&g) {
                grad[i] += w * gi;
            }
        }
        for z in 0..k {
            let slot: f64 = x.iter().enumerate().map(|(i, &v)| if i == z { q1[v] } else { q0[v] }).product();
            if slot == 0.0 {
                continue;
            }
            let w = prior_slot * slot;
            total += w * class_loss(rule, ln_nu, &logits, Some(z), false, &mut scratch, &mut g);
            for (&i, gi) in x.iter().zip(&g) {
                grad[i] += w * gi;
            }
        }
    });
    Ok((total, grad))
}

/// Exact anchored population loss in nats.
pub fn exact_population_loss(
    pair: &DiscretePair,
    k: usize,
    nu: f64,
    critic: &TabularCritic,
    rule: &GeneratingFunction,
) -> Result<f64> {
    Ok(population_loss_grad(pair, k, nu, &critic.log_values(), rule)?.0)
}

/// `nu / (K + nu) * E_{q0^K}[B_Psi(r* / nu, r / nu)]` in nats: the excess
/// population loss of `critic` over the true ratio.
pub fn bregman_gap(
    pair: &DiscretePair,
    k: usize,
    nu: f64,
    critic: &TabularCritic,
    rule: &GeneratingFunction,
) -> Result<f64> {
    check_setup(pair, k, nu, &critic.log_values(), rule)?;
    if nu == 0.0 {
        return Err(config("the Bregman gap is stated for nu > 0"));
    }
    let ratio = pair.ratio();
    let r = critic.values();
    let q0 = pair.q0();
    let mut u = vec![0.0; k];
    let mut v = vec![0.0; k];
    let mut total = 0.0;
    let mut failure = None;
    for_each_tuple(pair.alphabet_size(), k, |x| {
        let w: f64 = x.iter().map(|&i| q0[i]).product();
        if w == 0.0 || failure.is_some() {
            return;
        }
        for (j, &i) in x.iter().enumerate() {
            u[j] = ratio[i] / nu;
            v[j] = r[i] / nu;
        }
        match bregman(rule, &u, &v) {
            Ok(b) => total += w * b,
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(nu / (k as f64 + nu) * total)
}

/// Monte-Carlo estimate of [`exact_population_loss`] from `samples` draws of
/// `(z, x_{1:K})`; returns the mean and its standard error.
pub fn monte_carlo_population_loss(
    pair: &DiscretePair,
    k: usize,
    nu: f64,
    critic: &TabularCritic,
    rule: &GeneratingFunction,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<(f64, f64)> {
    let log_r = critic.log_values();
    check_setup(pair, k, nu, &log_r, rule)?;
    if samples < 2 {
        return Err(config("at least two samples are needed"));
    }
    let q1 = WeightedIndex::new(pair.q1()).map_err(|e| domain(format!("q1: {e}")))?;
    let q0 = WeightedIndex::new(pair.q0()).map_err(|e| domain(format!("q0: {e}")))?;
    let mut priors = vec![1.0; k + 1];
    priors[0] = nu;
    let classes = WeightedIndex::new(&priors).map_err(|e| domain(format!("priors: {e}")))?;
    let ln_nu = (nu > 0.0).then(|| nu.ln());
    let mut logits = vec![0.0; k];
    let mut g = vec![0.0; k];
    let mut scratch = ClassScratch::default();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let z = classes.sample(rng);
        for (slot, l) in logits.iter_mut().enumerate() {
            let x = if z == slot + 1 { q1.sample(rng) } else { q0.sample(rng) };
            *l = log_r[x];
        }
        let target = if z == 0 { None } else { Some(z - 1) };
        let v = class_loss(rule, ln_nu, &logits, target, false, &mut scratch, &mut g);
        sum += v;
        sum_sq += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Population forms of the two-sample objectives, with `q1` as the joint and
/// `q0` as the product distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairObjective {
    /// `-E_q1[log r] + log E_q0[r]`.
    Dv,
    /// `-E_q1[log r] + E_q0[r] - 1`.
    NwjRatio,
    /// `E_q1[softplus(-log r)] + E_q0[softplus(log r)]`.
    Js,
    /// Generalised DV loss with interpolation parameter `beta` (may be inf).
    GeneralizedDv(f64),
    /// Density-ratio loss of an asymmetric rule.
    AsymDre(GeneratingFunction),
}

/// Population loss in nats and its gradient with respect to `log r`.
pub fn pair_loss(pair: &DiscretePair, objective: PairObjective, log_r: &[f64]) -> Result<(f64, Vec<f64>)> {
    let n = pair.alphabet_size();
    if log_r.len() != n {
        return Err(domain("critic and alphabet sizes differ"));
    }
    let (q1, q0) = (pair.q1(), pair.q0());
    let e_log: f64 = (0..n).filter(|&x| q1[x] > 0.0).map(|x| q1[x] * log_r[x]).sum();
    let m: f64 = (0..n).map(|x| q0[x] * log_r[x].exp()).sum();
    let mut grad = vec![0.0; n];
    let value = match objective {
        PairObjective::Dv | PairObjective::GeneralizedDv(_) | PairObjective::NwjRatio => {
            let (anchor, factor) = match objective {
                PairObjective::Dv => (m.ln(), 1.0 / m),
                PairObjective::NwjRatio => (m - 1.0, 1.0),
                PairObjective::GeneralizedDv(beta) => {
                    if !(beta >= 0.0) {
                        return Err(config(format!("beta must be nonnegative or inf, got {beta}")));
                    }
                    if beta == 0.0 {
                        (m.ln(), 1.0 / m)
                    } else if beta.is_infinite() {
                        (m - 1.0, 1.0)
                    } else {
                        ((beta + 1.0) * ((m - 1.0) / (beta + 1.0)).ln_1p(), (beta + 1.0) / (beta + m))
                    }
                }
                _ => unreachable!(),
            };
            for x in 0..n {
                grad[x] = -q1[x] + q0[x] * log_r[x].exp() * factor;
            }
            -e_log + anchor
        }
        PairObjective::Js => {
            let mut v = 0.0;
            for x in 0..n {
                let c = log_r[x];
                v += q1[x] * softplus(-c) + q0[x] * softplus(c);
                grad[x] = -q1[x] * sigmoid(-c) + q0[x] * sigmoid(c);
            }
            v
        }
        PairObjective::AsymDre(rule) => {
            rule.validate()?;
            let mut v = 0.0;
            for x in 0..n {
                let c = log_r[x];
                let (jv, jg, mv, mg) = match rule {
                    GeneratingFunction::AsymLog => (-c, -1.0, c.exp(), c.exp()),
                    GeneratingFunction::AsymPower(a) => {
                        let (t, u) = (((a - 1.0) * c).exp(), (a * c).exp());
                        (t / (1.0 - a), -t, u / a, u)
                    }
                    GeneratingFunction::AsymInverseLog => ((-c).exp(), -(-c).exp(), c, 1.0),
                    _ => return Err(config(format!("{} is not an asymmetric rule", rule.name()))),
                };
                v += q1[x] * jv + q0[x] * mv;
                grad[x] = q1[x] * jg + q0[x] * mg;
            }
            v
        }
    };
    Ok((value, grad))
}
