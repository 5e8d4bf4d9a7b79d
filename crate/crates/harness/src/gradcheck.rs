//! Finite-difference sweep of every objective family through a small critic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ratiomi_core::critics::{Critic, CriticKind, CriticSpec, OutputForm};
use ratiomi_core::diffcore::{finite_diff_check, Gradients, ParamStore};
use ratiomi_core::objectives::{loss_mine, Family, ObjectiveSpec, TrainState};
use ratiomi_core::scoring::GeneratingFunction;
use ratiomi_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
const EPS: f64 = 1e-5;
const BATCH: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckRow {
    pub objective: String,
    pub seed: u64,
    pub critic: String,
    pub max_rel_err: f64,
    pub pass: bool,
}

/// One spec per family, with a scoring rule where the family needs one.
pub fn gradcheck_specs() -> Vec<ObjectiveSpec> {
    Family::ALL
        .into_iter()
        .map(|f| match f {
            Family::ScoredAnchor => ObjectiveSpec::new(f).with_rule(GeneratingFunction::SymPseudospherical(2.0)),
            Family::AsymDre => ObjectiveSpec::new(f).with_rule(GeneratingFunction::AsymPower(2.0)),
            Family::GeneralizedDv => ObjectiveSpec::new(f).with_beta(1.0),
            Family::InfonceAnchor | Family::JointMarginalAnchor => ObjectiveSpec::new(f).with_nu(0.7),
            _ => ObjectiveSpec::new(f),
        })
        .collect()
}

fn inputs(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("shape")
}

/// Checks `spec` on a small critic whose parameters, biases included, are
/// drawn uniformly from `[-0.8, 0.8]`.
///
/// Random biases keep relu pre-activations off their kinks. Separable critics
/// are the default because a joint critic's head bias has an exactly zero
/// gradient under shift-invariant losses (DV, InfoNCE), where the central
/// difference returns rounding noise of order `1e-16 / eps` that the `1e-8`
/// denominator floor cannot absorb.
pub fn check_objective(spec: &ObjectiveSpec, kind: CriticKind, seed: u64) -> Result<GradcheckRow> {
    let critic_spec = CriticSpec { kind, form: OutputForm::PmiExp, embed_dim: 3, hidden: vec![5], temperature: 0.5 };
    let mut critic = Critic::new(critic_spec, 3, 2, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for k in 0..critic.params().num_scalars() {
        let v = rng.gen_range(-0.8..0.8);
        critic.params_mut().flat_set(k, v);
    }
    let xs = inputs(BATCH, 3, &mut rng);
    let ys = inputs(BATCH, 2, &mut rng);
    let loss_fn = |p: &ParamStore| -> ratiomi_core::Result<(f64, Gradients)> {
        let scored = critic.score_matrix_with(p, &xs, &ys)?;
        let eval = if spec.family == Family::Mine {
            // the moving average is a constant of the surrogate; freeze it
            loss_mine(&scored.scores, 1.3)?
        } else {
            spec.training_loss(&scored.scores, &mut TrainState::default())?
        };
        let total = eval.value.total;
        Ok((total, scored.gradients(total, eval.grad)?))
    };
    let err = finite_diff_check(loss_fn, critic.params(), EPS)?;
    Ok(GradcheckRow {
        objective: spec.family.name().to_string(),
        seed,
        critic: format!("{kind:?}").to_lowercase(),
        max_rel_err: err,
        pass: err < GRADCHECK_TOLERANCE,
    })
}

pub fn gradcheck_all(kind: CriticKind, seeds: &[u64]) -> Result<Vec<GradcheckRow>> {
    let mut rows = Vec::new();
    for spec in gradcheck_specs() {
        for &seed in seeds {
            rows.push(check_objective(&spec, kind, seed)?);
        }
    }
    Ok(rows)
}
