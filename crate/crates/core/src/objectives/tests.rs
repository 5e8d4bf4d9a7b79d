use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{E, LN_2};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::diffcore::finite_diff_vector;
use crate::numeric::log_sum_exp;

fn constant(b: usize, log_value: f64) -> ScoreMatrix {
    ScoreMatrix::from_log(Matrix::filled(b, b, log_value)).unwrap()
}

fn random_scores(b: usize, spread: f64, rng: &mut ChaCha8Rng) -> ScoreMatrix {
    let data = (0..b * b).map(|_| rng.gen_range(-spread..spread)).collect();
    ScoreMatrix::from_log(Matrix::from_vec(b, b, data).unwrap()).unwrap()
}

fn all_specs() -> Vec<ObjectiveSpec> {
    vec![
        ObjectiveSpec::new(Family::Dv),
        ObjectiveSpec::new(Family::Nwj),
        ObjectiveSpec::new(Family::Js),
        ObjectiveSpec::new(Family::Smile),
        ObjectiveSpec::new(Family::Infonce),
        ObjectiveSpec::new(Family::InfonceAnchor).with_nu(0.7),
        ObjectiveSpec::new(Family::InfonceAnchor).with_nu(0.0),
        ObjectiveSpec::new(Family::ScoredAnchor).with_rule(GeneratingFunction::SymPseudospherical(2.0)),
        ObjectiveSpec::new(Family::ScoredAnchor).with_rule(GeneratingFunction::SymPower(2.0)).with_nu(0.0),
        ObjectiveSpec::new(Family::ScoredAnchor).with_rule(GeneratingFunction::SymInverseLog).with_nu(2.0),
        ObjectiveSpec::new(Family::ScoredAnchor).with_rule(GeneratingFunction::AsymPower(2.0)),
        ObjectiveSpec::new(Family::GeneralizedDv).with_beta(0.0),
        ObjectiveSpec::new(Family::GeneralizedDv).with_beta(2.5),
        ObjectiveSpec::new(Family::GeneralizedDv).with_beta(f64::INFINITY),
        ObjectiveSpec::new(Family::AsymDre).with_rule(GeneratingFunction::AsymLog),
        ObjectiveSpec::new(Family::AsymDre).with_rule(GeneratingFunction::AsymPower(2.0)),
        ObjectiveSpec::new(Family::AsymDre).with_rule(GeneratingFunction::AsymPower(0.5)),
        ObjectiveSpec::new(Family::AsymDre).with_rule(GeneratingFunction::AsymInverseLog),
        ObjectiveSpec::new(Family::JointMarginalAnchor),
        ObjectiveSpec::new(Family::JointMarginalAnchor).with_nu(0.0),
    ]
}

fn loss_at(spec: &ObjectiveSpec, b: usize, flat: &[f64]) -> crate::Result<f64> {
    let s = ScoreMatrix::from_log(Matrix::from_vec(b, b, flat.to_vec())?)?;
    Ok(spec.training_loss(&s, &mut TrainState::default())?.value.total)
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for spec in all_specs() {
        for b in [3, 4, 6] {
            let s = random_scores(b, 1.5, &mut rng);
            let eval = spec.training_loss(&s, &mut TrainState::default()).unwrap();
            let x = s.log_values().as_slice().to_vec();
            let err = finite_diff_vector(|v| loss_at(&spec, b, v), &x, eval.grad.as_slice(), 1e-6).unwrap();
            assert!(err < 1e-4, "{spec:?} B={b}: {err}");
        }
    }
}

#[test]
fn mine_gradient_matches_finite_differences_at_fixed_average() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let s = random_scores(5, 1.0, &mut rng);
    let eval = loss_mine(&s, 1.7).unwrap();
    let x = s.log_values().as_slice().to_vec();
    let f = |v: &[f64]| -> crate::Result<f64> {
        let m = ScoreMatrix::from_log(Matrix::from_vec(5, 5, v.to_vec())?)?;
        Ok(loss_mine(&m, 1.7)?.value.total)
    };
    assert!(finite_diff_vector(f, &x, eval.grad.as_slice(), 1e-6).unwrap() < 1e-6);
}

#[test]
fn decompositions_sum_to_total() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for spec in all_specs() {
        let s = random_scores(5, 2.0, &mut rng);
        let v = spec.training_loss(&s, &mut TrainState::default()).unwrap().value;
        assert!((v.joint + v.anchor - v.total).abs() < 1e-12);
        assert!(v.total.is_finite());
    }
}

#[test]
fn dv_examples() {
    assert_eq!(loss_dv(&constant(4, 0.0)).unwrap().value.total, 0.0);
    assert!(loss_dv(&constant(4, 2.3)).unwrap().value.total.abs() < 1e-14);
    assert!(matches!(loss_dv(&constant(1, 0.0)), Err(Error::Batch { .. })));
}

#[test]
fn nwj_examples() {
    assert!(loss_nwj(&constant(3, 1.0)).unwrap().value.total.abs() < 1e-15);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s = random_scores(4, 1.0, &mut rng);
    let doubled = ScoreMatrix::from_log(s.log_values().map(|v| v + LN_2)).unwrap();
    let (a, b) = (loss_nwj(&s).unwrap().value.total, loss_nwj(&doubled).unwrap().value.total);
    assert!((a - b).abs() > 1e-3);
    let (a, b) = (loss_dv(&s).unwrap().value.total, loss_dv(&doubled).unwrap().value.total);
    assert!((a - b).abs() < 1e-12);
    let overflow = ScoreMatrix::from_log(Matrix::filled(3, 3, 800.0));
    assert!(matches!(overflow, Err(Error::Numeric(msg)) if msg.contains("800")));
}

#[test]
fn asym_log_and_nwj_differ_by_a_shift_of_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let s = random_scores(4, 2.0, &mut rng);
        let shifted = ScoreMatrix::from_log(s.log_values().map(|v| v - 1.0)).unwrap();
        let a = loss_asym_dre(&GeneratingFunction::AsymLog, &shifted).unwrap().value.total;
        let n = loss_nwj(&s).unwrap().value.total;
        assert!((a - (n + 1.0)).abs() < 1e-12);
        let bound = nwj_ratio_bound(&s).unwrap();
        let scaled = ScoreMatrix::from_log(s.log_values().map(|v| v + 1.0)).unwrap();
        assert!((bound + loss_nwj(&scaled).unwrap().value.total).abs() < 1e-12);
    }
}

#[test]
fn js_examples_and_anchor_identity() {
    assert!((loss_js(&constant(3, 0.0)).unwrap().value.total - 2.0 * LN_2).abs() < 1e-15);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let s = random_scores(2, 3.0, &mut rng);
        let js = loss_js(&s).unwrap().value;
        let anchor = loss_infonce_anchor(&s, 1.0).unwrap().value;
        assert!((js.total - 2.0 * anchor.total).abs() < 1e-10);
        assert!((js.joint - 2.0 * anchor.joint).abs() < 1e-10);
    }
}

#[test]
fn smile_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = random_scores(5, 2.0, &mut rng);
    let dv = loss_dv(&s).unwrap().value.total;
    assert_eq!(loss_smile(&s, f64::INFINITY).unwrap().value.total, dv);
    assert_eq!(loss_smile(&s, 2.0).unwrap().value.total, dv);
    assert!((loss_smile(&s, 1.0).unwrap().value.total - dv).abs() > 1e-6);
    assert!(loss_smile(&s, 0.0).is_err());
}

#[test]
fn infonce_examples() {
    assert!(loss_infonce(&constant(5, 0.4)).unwrap().value.total.abs() < 1e-14);
    let s = ScoreMatrix::from_log(Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap()).unwrap();
    let estimate = -loss_infonce(&s).unwrap().value.total;
    assert!((estimate - (1.0 - ((E + 1.0) / 2.0).ln())).abs() < 1e-14);
}

proptest! {
    #[test]
    fn infonce_estimate_is_capped_by_log_batch(b in 2usize..9, seed in any::<u64>(), spread in 0.1f64..40.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_scores(b, spread, &mut rng);
        let estimate = -loss_infonce(&s).unwrap().value.total;
        prop_assert!(estimate <= (b as f64).ln() + 1e-9);
    }

    #[test]
    fn generalized_dv_bound_is_non_increasing_in_beta(b in 2usize..7, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_scores(b, 2.0, &mut rng);
        let mut prev = f64::INFINITY;
        for beta in [0.0, 0.25, 1.0, 4.0, 16.0, 1e3, f64::INFINITY] {
            let bound = -loss_generalized_dv(&s, beta).unwrap().value.total;
            prop_assert!(bound <= prev + 1e-12, "beta {beta}: {bound} > {prev}");
            prev = bound;
        }
    }

    #[test]
    fn log_scored_anchor_is_infonce_anchor(b in 2usize..8, seed in any::<u64>(), nu in 0.01f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_scores(b, 3.0, &mut rng);
        let a = loss_scored_anchor(&GeneratingFunction::SymLog, &s, nu).unwrap();
        let c = loss_infonce_anchor(&s, nu).unwrap();
        prop_assert!((a.value.total - c.value.total).abs() < 1e-10);
    }
}

/// Independent transcription of the anchored minibatch loss.
fn anchor_reference(s: &ScoreMatrix, nu: f64) -> f64 {
    let b = s.batch_size();
    let k = (b - 1) as f64;
    let l = s.log_values();
    let (mut joint, mut anchor) = (0.0, 0.0);
    for i in 0..b {
        let prev = (i + b - 1) % b;
        let mut den = vec![nu.ln()];
        den.extend((0..b).filter(|&j| j != prev).map(|j| l[(i, j)]));
        joint -= l[(i, i)] - log_sum_exp(&den);
        let mut den = vec![nu.ln()];
        den.extend((0..b).filter(|&j| j != i).map(|j| l[(i, j)]));
        anchor -= nu.ln() - log_sum_exp(&den);
    }
    (k / (k + nu) * joint + nu / (k + nu) * anchor) / b as f64
}

#[test]
fn infonce_anchor_matches_reference_layout() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for b in 2..7 {
        for nu in [0.1, 1.0, 5.0] {
            let s = random_scores(b, 2.0, &mut rng);
            let v = loss_infonce_anchor(&s, nu).unwrap().value.total;
            assert!((v - anchor_reference(&s, nu)).abs() < 1e-12);
        }
    }
    let v = loss_infonce_anchor(&constant(2, 0.0), 1.0).unwrap().value;
    assert!((v.total - LN_2).abs() < 1e-15);
    assert!((v.joint - LN_2 / 2.0).abs() < 1e-15);
}

#[test]
fn infonce_anchor_nu_validation() {
    assert!(matches!(loss_infonce_anchor(&constant(3, 0.0), -1.0), Err(Error::Config(_))));
    assert!(matches!(loss_infonce_anchor(&constant(2, 0.0), 0.0), Err(Error::Config(_))));
    assert!(loss_infonce_anchor(&constant(3, 0.0), 0.0).is_ok());
}

#[test]
fn vanishing_anchor_weight_recovers_k_candidate_cross_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for b in 3..7 {
        let s = random_scores(b, 2.0, &mut rng);
        let l = s.log_values();
        let mut ce = 0.0;
        for i in 0..b {
            let prev = (i + b - 1) % b;
            let row: Vec<f64> = (0..b).filter(|&j| j != prev).map(|j| l[(i, j)]).collect();
            ce += log_sum_exp(&row) - l[(i, i)];
        }
        ce /= b as f64;
        let small = loss_infonce_anchor(&s, 1e-8).unwrap().value.total;
        assert!((small - ce).abs() < 1e-6, "{small} vs {ce}");
        let zero = loss_infonce_anchor(&s, 0.0).unwrap().value.total;
        assert!((zero - ce).abs() < 1e-12);
    }
}

#[test]
fn pseudospherical_anchor_at_uniform_scores() {
    let v = loss_scored_anchor(&GeneratingFunction::SymPseudospherical(2.0), &constant(2, 0.0), 1.0).unwrap();
    assert!((v.value.total + 0.5).abs() < 1e-14, "{}", v.value.total);
}

#[test]
fn generalized_dv_endpoints() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let s = random_scores(5, 2.0, &mut rng);
        let dv = loss_dv(&s).unwrap().value.total;
        assert!((loss_generalized_dv(&s, 0.0).unwrap().value.total - dv).abs() < 1e-12);
        let nwj = -nwj_ratio_bound(&s).unwrap();
        assert!((loss_generalized_dv(&s, f64::INFINITY).unwrap().value.total - nwj).abs() < 1e-12);
        assert!((loss_generalized_dv(&s, 1e6).unwrap().value.total - nwj).abs() < 1e-4);
    }
    assert!(loss_generalized_dv(&constant(3, 0.0), -1.0).is_err());
}

#[test]
fn chi_squared_examples() {
    let v = loss_asym_dre(&GeneratingFunction::AsymPower(2.0), &constant(3, 0.0)).unwrap().value.total;
    assert!((v + 0.5).abs() < 1e-15);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let s = random_scores(4, 1.5, &mut rng);
        let a = loss_asym_dre(&GeneratingFunction::AsymPower(2.0), &s).unwrap();
        let c = loss_chi2(&s).unwrap();
        assert!((a.value.total - c.value.total).abs() < 1e-10);
    }
    assert!(loss_asym_dre(&GeneratingFunction::SymLog, &constant(3, 0.0)).is_err());
}

#[test]
fn joint_marginal_anchor_uniform_scores() {
    let v = loss_joint_marginal_anchor(&constant(2, 0.0), 1.0).unwrap().value.total;
    assert!((v - LN_2).abs() < 1e-15);
}

#[test]
fn mine_state_and_dv_coincidence() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let s = random_scores(5, 1.0, &mut rng);
    let m = marginal_mean(&s).unwrap();
    let mine = loss_mine(&s, m).unwrap();
    let dv = loss_dv(&s).unwrap();
    assert!((mine.value.total - dv.value.total).abs() < 1e-12);
    for (a, b) in mine.grad.as_slice().iter().zip(dv.grad.as_slice()) {
        assert!((a - b).abs() < 1e-14);
    }
    assert!(loss_mine(&s, 0.0).is_err());

    let spec = ObjectiveSpec { ema_rate: 1.0, ..ObjectiveSpec::new(Family::Mine) };
    let mut state = TrainState::default();
    for _ in 0..3 {
        let batch = random_scores(5, 1.0, &mut rng);
        let g = spec.training_loss(&batch, &mut state).unwrap().grad;
        let d = loss_dv(&batch).unwrap().grad;
        for (a, b) in g.as_slice().iter().zip(d.as_slice()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    let mut st = MineState::default();
    assert_eq!(st.update(2.0, 0.1).unwrap(), 2.0);
    assert!((st.update(4.0, 0.1).unwrap() - 2.2).abs() < 1e-15);
}

#[test]
fn spec_validation() {
    assert!(ObjectiveSpec::new(Family::ScoredAnchor).validate(4).is_err());
    assert!(ObjectiveSpec::new(Family::AsymDre).with_rule(GeneratingFunction::SymLog).validate(4).is_err());
    assert!(ObjectiveSpec::new(Family::ScoredAnchor)
        .with_rule(GeneratingFunction::AsymLog)
        .with_nu(0.0)
        .validate(4)
        .is_err());
    assert!(ObjectiveSpec::new(Family::InfonceAnchor).with_nu(0.0).validate(2).is_err());
    assert!(ObjectiveSpec::new(Family::Dv).validate(1).is_err());
    assert!(ObjectiveSpec { ema_rate: 0.0, ..ObjectiveSpec::new(Family::Mine) }.validate(4).is_err());
    assert_eq!(Family::from_name("generalized_dv").unwrap(), Family::GeneralizedDv);
    assert!(Family::from_name("alpha_infonce").is_err());
}

#[test]
fn estimates_and_plug_in() {
    let flat = constant(4, 0.0);
    let spec = ObjectiveSpec::new(Family::InfonceAnchor);
    let p = plug_in_mi(&spec, std::slice::from_ref(&flat)).unwrap();
    assert_eq!(p.bits, 0.0);
    assert!(p.consistent);
    assert!(!plug_in_mi(&ObjectiveSpec::new(Family::Infonce), std::slice::from_ref(&flat)).unwrap().consistent);
    assert!(plug_in_mi(&spec, &[]).is_err());
    assert!(spec.estimate(EvalMode::Type1Bound, &flat).is_err());
    assert_eq!(ObjectiveSpec::new(Family::Infonce).estimate(EvalMode::Type1Bound, &flat).unwrap(), 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let s = random_scores(4, 1.0, &mut rng);
    let js = ObjectiveSpec::new(Family::Js).estimate(EvalMode::Type2Bound, &s).unwrap();
    assert!((js - nwj_ratio_bound(&s).unwrap()).abs() < 1e-15);
    assert_eq!(EvalMode::Type2Bound.estimator_type(), 2);
}
