//! Training objectives and evaluation modes for ratio and MI estimation.
//!
//! Every loss consumes a [`ScoreMatrix`] and returns a [`LossEval`]: the loss
//! in nats (to be minimised), its split into a joint-sample term and an
//! anchor/marginal term, and its gradient with respect to the log-scores.
//! Estimates come in three flavours ([`EvalMode`]): the negated training
//! bound, a different bound evaluated on the trained critic, or the plug-in
//! mean of the learned log-ratio over joint samples.

use alloc::format;

use crate::critics::ScoreMatrix;
use crate::error::{config, numeric, Error, Result};
use crate::linalg::Matrix;
use crate::numeric::nats_to_bits;
use crate::scoring::GeneratingFunction;

pub mod classes;
mod losses;

pub use losses::{
    loss_asym_dre, loss_chi2, loss_dv, loss_generalized_dv, loss_infonce, loss_infonce_anchor, loss_joint_marginal_anchor,
    loss_js, loss_mine, loss_nwj, loss_scored_anchor, loss_smile, marginal_mean, nwj_ratio_bound,
};

#[cfg(test)]
mod tests;

/// A loss value and its two-term decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossValue {
    pub total: f64,
    /// Term driven by joint (positive) samples.
    pub joint: f64,
    /// Term driven by anchor or product-of-marginals samples.
    pub anchor: f64,
}

impl LossValue {
    pub fn new(joint: f64, anchor: f64) -> Self {
        Self { total: joint + anchor, joint, anchor }
    }
}

/// A loss together with its gradient with respect to the log-scores.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub value: LossValue,
    pub grad: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Family {
    Dv,
    Nwj,
    Mine,
    Js,
    Smile,
    Infonce,
    InfonceAnchor,
    ScoredAnchor,
    GeneralizedDv,
    AsymDre,
    JointMarginalAnchor,
}

impl Family {
    pub const ALL: [Family; 11] = [
        Family::Dv,
        Family::Nwj,
        Family::Mine,
        Family::Js,
        Family::Smile,
        Family::Infonce,
        Family::InfonceAnchor,
        Family::ScoredAnchor,
        Family::GeneralizedDv,
        Family::AsymDre,
        Family::JointMarginalAnchor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Dv => "dv",
            Family::Nwj => "nwj",
            Family::Mine => "mine",
            Family::Js => "js",
            Family::Smile => "smile",
            Family::Infonce => "infonce",
            Family::InfonceAnchor => "infonce_anchor",
            Family::ScoredAnchor => "scored_anchor",
            Family::GeneralizedDv => "generalized_dv",
            Family::AsymDre => "asym_dre",
            Family::JointMarginalAnchor => "joint_marginal_anchor",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| config(format!("unknown objective family '{name}'")))
    }

    fn anchored(self) -> bool {
        matches!(self, Family::InfonceAnchor | Family::ScoredAnchor | Family::JointMarginalAnchor)
    }
}

/// How a trained critic is turned into an MI estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EvalMode {
    /// Negated training bound.
    Type1Bound,
    /// A bound other than the training objective (DV for MINE, NWJ for JS,
    /// clipped DV for SMILE, DV otherwise).
    Type2Bound,
    /// Plug-in mean of the joint log-scores.
    #[default]
    Type3Plugin,
}

impl EvalMode {
    pub fn estimator_type(self) -> u8 {
        match self {
            EvalMode::Type1Bound => 1,
            EvalMode::Type2Bound => 2,
            EvalMode::Type3Plugin => 3,
        }
    }
}

/// Objective family and hyperparameters. The number of negatives is tied to
/// the minibatch: `K = B - 1`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ObjectiveSpec {
    pub family: Family,
    /// Prior weight of the anchor class.
    #[cfg_attr(feature = "serde", serde(default = "default_nu"))]
    pub nu: f64,
    /// Generalised-DV interpolation parameter; `inf` selects the NWJ end.
    #[cfg_attr(feature = "serde", serde(default, with = "extended_f64"))]
    pub beta: f64,
    /// SMILE log-score clip.
    #[cfg_attr(feature = "serde", serde(default = "default_clip"))]
    pub clip: f64,
    /// Weight of the current batch in MINE's moving average (1 = no smoothing).
    #[cfg_attr(feature = "serde", serde(default = "default_ema_rate"))]
    pub ema_rate: f64,
    /// Scoring rule for `scored_anchor` and `asym_dre`.
    #[cfg_attr(feature = "serde", serde(default))]
    pub rule: Option<GeneratingFunction>,
}

#[cfg(feature = "serde")]
fn default_nu() -> f64 {
    1.0
}
#[cfg(feature = "serde")]
fn default_clip() -> f64 {
    5.0
}
#[cfg(feature = "serde")]
fn default_ema_rate() -> f64 {
    0.01
}

/// Floats that may be infinite, written as the string `"inf"`.
#[cfg(feature = "serde")]
mod extended_f64 {
    use serde::de::{self, Deserializer, Visitor};
    use serde::Serializer;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = f64;
            fn expecting(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
                f.write_str("a number or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
                Ok(v)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
                match v {
                    "inf" | "infinity" => Ok(f64::INFINITY),
                    other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

impl ObjectiveSpec {
    pub fn new(family: Family) -> Self {
        Self { family, nu: 1.0, beta: 0.0, clip: 5.0, ema_rate: 0.01, rule: None }
    }

    pub fn with_nu(mut self, nu: f64) -> Self {
        self.nu = nu;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_rule(mut self, rule: GeneratingFunction) -> Self {
        self.rule = Some(rule);
        self
    }

    /// Checks hyperparameters against a minibatch of `batch` rows.
    pub fn validate(&self, batch: usize) -> Result<()> {
        if batch < 2 {
            return Err(Error::Batch { needed: 2, found: batch });
        }
        let k = batch - 1;
        if self.family.anchored() {
            if !(self.nu >= 0.0) || !self.nu.is_finite() {
                return Err(config(format!("nu must be finite and nonnegative, got {}", self.nu)));
            }
            if self.nu == 0.0 && k < 2 {
                return Err(config("nu = 0 needs K >= 2"));
            }
        }
        match self.family {
            Family::GeneralizedDv if !(self.beta >= 0.0) => {
                return Err(config(format!("beta must be nonnegative or inf, got {}", self.beta)));
            }
            Family::Smile if !(self.clip > 0.0) => {
                return Err(config(format!("clip must be positive, got {}", self.clip)));
            }
            Family::Mine if !(self.ema_rate > 0.0 && self.ema_rate <= 1.0) => {
                return Err(config(format!("ema_rate must lie in (0, 1], got {}", self.ema_rate)));
            }
            Family::ScoredAnchor => {
                let rule = self.rule_required()?;
                if self.nu == 0.0 && !rule.is_symmetric() {
                    return Err(config("asymmetric rules need nu > 0"));
                }
            }
            Family::AsymDre
                if self.rule_required()?.is_symmetric() => {
                    return Err(config("asym_dre needs an asymmetric rule"));
                }
            _ => {}
        }
        Ok(())
    }

    fn rule_required(&self) -> Result<GeneratingFunction> {
        let rule = self.rule.ok_or_else(|| config(format!("{} needs a scoring rule", self.family.name())))?;
        rule.validate()?;
        Ok(rule)
    }

    /// Whether the population optimum of the training loss is the density
    /// ratio itself, so that plug-in estimates are unbiased at the optimum.
    pub fn fisher_consistent(&self) -> bool {
        match self.family {
            Family::Js | Family::Smile | Family::AsymDre => true,
            f if f.anchored() => self.nu > 0.0,
            Family::GeneralizedDv => self.beta > 0.0,
            _ => false,
        }
    }

    /// Training loss for one minibatch. MINE updates its moving average in `state`.
    pub fn training_loss(&self, scores: &ScoreMatrix, state: &mut TrainState) -> Result<LossEval> {
        self.validate(scores.batch_size())?;
        match self.family {
            Family::Dv => loss_dv(scores),
            Family::Nwj => loss_nwj(scores),
            Family::Mine => {
                let ema = state.mine.update(marginal_mean(scores)?, self.ema_rate)?;
                loss_mine(scores, ema)
            }
            Family::Js | Family::Smile => loss_js(scores),
            Family::Infonce => loss_infonce(scores),
            Family::InfonceAnchor => loss_infonce_anchor(scores, self.nu),
            Family::ScoredAnchor => loss_scored_anchor(&self.rule_required()?, scores, self.nu),
            Family::GeneralizedDv => loss_generalized_dv(scores, self.beta),
            Family::AsymDre => loss_asym_dre(&self.rule_required()?, scores),
            Family::JointMarginalAnchor => loss_joint_marginal_anchor(scores, self.nu),
        }
    }

    /// Minibatch MI estimate in nats under `mode`.
    pub fn estimate(&self, mode: EvalMode, scores: &ScoreMatrix) -> Result<f64> {
        self.validate(scores.batch_size())?;
        match mode {
            EvalMode::Type3Plugin => Ok(mean_joint_log_score(scores)),
            EvalMode::Type1Bound => match self.family {
                Family::Dv | Family::Mine => Ok(-loss_dv(scores)?.value.total),
                Family::Nwj => Ok(-loss_nwj(scores)?.value.total),
                Family::Infonce => Ok(-loss_infonce(scores)?.value.total),
                Family::GeneralizedDv => Ok(-loss_generalized_dv(scores, self.beta)?.value.total),
                other => Err(config(format!("{} does not train a bound; use type2_bound or type3_plugin", other.name()))),
            },
            EvalMode::Type2Bound => match self.family {
                Family::Js => nwj_ratio_bound(scores),
                Family::Smile => Ok(-loss_smile(scores, self.clip)?.value.total),
                Family::Nwj => Ok(-loss_nwj(scores)?.value.total),
                Family::Infonce => Ok(-loss_infonce(scores)?.value.total),
                Family::GeneralizedDv => Ok(-loss_generalized_dv(scores, self.beta)?.value.total),
                _ => Ok(-loss_dv(scores)?.value.total),
            },
        }
    }
}

/// Mutable per-run objective state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainState {
    pub mine: MineState,
}

/// Moving average of the marginal score mean used by MINE. It starts at the
/// first batch's mean.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MineState {
    pub ema: Option<f64>,
}

impl MineState {
    /// Folds in a batch mean with weight `rate` and returns the new average.
    pub fn update(&mut self, batch_mean: f64, rate: f64) -> Result<f64> {
        let ema = match self.ema {
            None => batch_mean,
            Some(prev) => (1.0 - rate) * prev + rate * batch_mean,
        };
        if !(ema > 0.0) || !ema.is_finite() {
            return Err(numeric(format!("MINE moving average left (0, inf): {ema}")));
        }
        self.ema = Some(ema);
        Ok(ema)
    }
}

fn mean_joint_log_score(scores: &ScoreMatrix) -> f64 {
    let d = scores.log_values().diag();
    d.iter().sum::<f64>() / d.len() as f64
}

/// Plug-in MI estimate in bits: the mean joint log-score over all batches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlugIn {
    pub bits: f64,
    /// False when the critic was trained by an objective whose optimum is the
    /// ratio only up to a sample-dependent factor; the estimate is then biased.
    pub consistent: bool,
}

pub fn plug_in_mi(spec: &ObjectiveSpec, batches: &[ScoreMatrix]) -> Result<PlugIn> {
    if batches.is_empty() {
        return Err(config("plug-in estimate needs at least one batch"));
    }
    let consistent = spec.fisher_consistent();
    if !consistent {
        log::warn!(
            "plug-in estimate from a {} critic: the objective pins the ratio only up to a factor, expect bias",
            spec.family.name()
        );
    }
    let total: f64 = batches.iter().map(mean_joint_log_score).sum();
    Ok(PlugIn { bits: nats_to_bits(total / batches.len() as f64), consistent })
}
