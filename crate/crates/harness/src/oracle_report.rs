//! Exact quantities for a small discrete pair, as consumed by `ratiomi oracle`.

use ratiomi_core::oracle::{
    brute_force_optimum, exact_kjsd, exact_kjsd_mixture, exact_kl, exact_chi2, exact_population_loss,
    infonce_objective, theorem1_bound, DiscretePair, MinimizeOptions,
};
use ratiomi_core::scoring::GeneratingFunction;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

const SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleRequest {
    pub q1: Vec<f64>,
    pub q0: Vec<f64>,
    #[serde(rename = "K", alias = "k")]
    pub k: usize,
    #[serde(default = "one")]
    pub nu: f64,
    /// Scoring-rule name; `sym_log` when absent.
    #[serde(default)]
    pub rule: Option<String>,
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Also run the brute-force optimiser (slow for large alphabets).
    #[serde(default = "yes")]
    pub optimize: bool,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}

/// Each link of the K-way JSD bound chain, checked with `1e-9` slack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainVerdicts {
    /// `None` when the true ratio vanishes somewhere and cannot be used as a critic.
    pub infonce_at_ratio_equals_kjsd: Option<bool>,
    pub kjsd_le_theorem1_bound: bool,
    pub theorem1_bound_le_min_log2k_kl: bool,
    pub kjsd_le_min_log2k_kl: bool,
    /// The lower bound `KL - log2(chi2 / K + 1)` that does hold in general.
    pub kjsd_ge_chi2_lower_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimumReport {
    pub ratio: Vec<f64>,
    /// `max |r_hat - r*|` for `nu > 0`; relative spread of `r_hat / r*` for `nu = 0`.
    pub error: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub alphabet_size: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub nu: f64,
    pub rule: String,
    pub kl_bits: f64,
    pub chi2: f64,
    pub kjsd_bits: f64,
    pub kjsd_mixture_bits: f64,
    pub theorem1_bound_bits: f64,
    pub chi2_lower_bound_bits: f64,
    pub log2_k: f64,
    pub infonce_at_ratio_bits: Option<f64>,
    pub population_loss_at_ratio_nats: Option<f64>,
    pub chain: ChainVerdicts,
    pub optimum: Option<OptimumReport>,
}

pub fn oracle_report(req: &OracleRequest) -> Result<OracleReport> {
    let pair = DiscretePair::new(req.q1.clone(), req.q0.clone())?;
    let rule = GeneratingFunction::from_name(req.rule.as_deref().unwrap_or("sym_log"), req.alpha)?;
    let k = req.k;
    let kl = exact_kl(&pair);
    let chi2 = exact_chi2(&pair);
    let kjsd = exact_kjsd(&pair, k)?;
    let kjsd_mixture = exact_kjsd_mixture(&pair, k)?;
    let t1 = theorem1_bound(kl, k)?;
    let log2_k = (k as f64).log2();
    let lower = kl - (chi2 / k as f64).ln_1p() / std::f64::consts::LN_2;
    let ratio_critic = pair.ratio_critic().ok();
    let infonce_at_ratio = ratio_critic.as_ref().map(|c| infonce_objective(&pair, k, c)).transpose()?;
    let population = match &ratio_critic {
        Some(c) if req.nu > 0.0 || k >= 2 => Some(exact_population_loss(&pair, k, req.nu, c, &rule)?),
        _ => None,
    };
    let optimum = if req.optimize { Some(optimum(&pair, k, req.nu, &rule)?) } else { None };
    Ok(OracleReport {
        alphabet_size: pair.alphabet_size(),
        k,
        nu: req.nu,
        rule: rule.name().to_string(),
        kl_bits: kl,
        chi2,
        kjsd_bits: kjsd,
        kjsd_mixture_bits: kjsd_mixture,
        theorem1_bound_bits: t1,
        chi2_lower_bound_bits: lower,
        log2_k,
        infonce_at_ratio_bits: infonce_at_ratio,
        population_loss_at_ratio_nats: population,
        chain: ChainVerdicts {
            infonce_at_ratio_equals_kjsd: infonce_at_ratio.map(|v| (v - kjsd).abs() < 1e-10),
            kjsd_le_theorem1_bound: kjsd <= t1 + SLACK,
            theorem1_bound_le_min_log2k_kl: t1 <= log2_k.min(kl) + SLACK,
            kjsd_le_min_log2k_kl: kjsd <= log2_k.min(kl) + SLACK,
            kjsd_ge_chi2_lower_bound: kjsd >= lower - SLACK,
        },
        optimum,
    })
}

fn optimum(pair: &DiscretePair, k: usize, nu: f64, rule: &GeneratingFunction) -> Result<OptimumReport> {
    let m = brute_force_optimum(pair, k, nu, rule, &MinimizeOptions::default())?;
    let ratio = m.critic()?.values().to_vec();
    let truth = pair.ratio();
    let error = if nu > 0.0 {
        ratio.iter().zip(&truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    } else {
        let c: Vec<f64> =
            ratio.iter().zip(&truth).filter(|(_, t)| **t > 0.0).map(|(a, b)| a / b).collect();
        let (lo, hi) = c.iter().fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(*v), h.max(*v)));
        if c.is_empty() {
            return Err(HarnessError::Config("q1 has no mass".into()));
        }
        (hi - lo) / lo
    };
    Ok(OptimumReport { ratio, error, grad_norm: m.grad_norm, iterations: m.iterations })
}
