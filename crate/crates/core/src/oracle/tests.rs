use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::scoring::GeneratingFunction;

fn binary() -> DiscretePair {
    DiscretePair::new(vec![0.75, 0.25], vec![0.25, 0.75]).unwrap()
}

fn ln2() -> f64 {
    core::f64::consts::LN_2
}

#[test]
fn posterior_examples() {
    assert_eq!(exact_posterior(&[1.0], 1.0).unwrap().as_slice(), &[0.5, 0.5]);
    let p = exact_posterior(&[1.0, 1.0, 1.0], 0.0).unwrap();
    assert_eq!(p.as_slice()[0], 0.0);
    for v in &p.as_slice()[1..] {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
    assert_eq!(exact_posterior(&[2.0, 1.0], 1.0).unwrap().as_slice(), &[0.25, 0.5, 0.25]);
    assert!(exact_posterior(&[0.0, 0.0], 0.0).is_err());
    assert!(exact_posterior(&[1.0], -1.0).is_err());
}

#[test]
fn pair_validation() {
    assert!(DiscretePair::new(vec![0.5, 0.5], vec![1.0, 0.0]).is_err());
    assert!(DiscretePair::new(vec![0.5, 0.4], vec![0.5, 0.5]).is_err());
    assert!(DiscretePair::new(vec![0.0, 1.0], vec![0.5, 0.5]).is_ok());
    assert!(TabularCritic::new(vec![1.0, 0.0]).is_err());
    let joint = Matrix::from_rows(&[vec![0.4, 0.1], vec![0.1, 0.4]]).unwrap();
    let pair = DiscretePair::from_joint(&joint).unwrap();
    assert_eq!(pair.q0(), &[0.25; 4]);
}

#[test]
fn kl_and_chi2_examples() {
    let same = DiscretePair::new(vec![0.3, 0.7], vec![0.3, 0.7]).unwrap();
    assert!(exact_kl(&same).abs() < 1e-15);
    assert!(exact_chi2(&same).abs() < 1e-15);
    let expected = 0.5 * 3f64.log2();
    assert!((exact_kl(&binary()) - expected).abs() < 1e-12);
    assert!((exact_kl(&binary()) - 0.7925).abs() < 1e-4);
}

#[test]
fn chi2_dominates_exponentiated_kl() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..1000 {
        let pair = DiscretePair::random(2 + i % 5, &mut rng).unwrap();
        let kl_nats = exact_kl(&pair) * ln2();
        assert!(exact_chi2(&pair) >= kl_nats.exp_m1() - 1e-12);
    }
}

#[test]
fn closed_form_bound_checkpoints() {
    assert!((theorem1_bound(2.0, 4).unwrap() - 1.1926).abs() < 5e-4);
    assert!((theorem1_bound(2.0, 64).unwrap() - 1.9339).abs() < 5e-4);
    for k in [1, 2, 7, 100] {
        assert_eq!(theorem1_bound(0.0, k).unwrap(), 0.0);
    }
    assert!(theorem1_bound(-1.0, 2).is_err());
    assert!(theorem1_bound(1.0, 0).is_err());
}

#[test]
fn kjsd_examples() {
    let same = DiscretePair::new(vec![0.2, 0.3, 0.5], vec![0.2, 0.3, 0.5]).unwrap();
    for k in 1..=4 {
        assert!(exact_kjsd(&same, k).unwrap().abs() < 1e-12);
    }
    let pair = binary();
    assert!(exact_kjsd(&pair, 1).unwrap().abs() < 1e-15);
    let j = exact_kjsd(&pair, 2).unwrap();
    let bound = theorem1_bound(exact_kl(&pair), 2).unwrap();
    assert!(j > 0.0 && j <= 1.0f64.min(bound));
    let at_ratio = infonce_objective(&pair, 2, &pair.ratio_critic().unwrap()).unwrap();
    assert!((j - at_ratio).abs() < 1e-12);
}

#[test]
fn kjsd_paths_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 2..=4 {
        let pair = DiscretePair::random(n, &mut rng).unwrap();
        for k in 1..=4 {
            let a = exact_kjsd(&pair, k).unwrap();
            let b = exact_kjsd_mixture(&pair, k).unwrap();
            assert!((a - b).abs() < 1e-12, "n={n} k={k}: {a} vs {b}");
        }
    }
    // zero-mass points route through the mixture path
    let sparse = DiscretePair::new(vec![0.0, 0.4, 0.6], vec![0.3, 0.3, 0.4]).unwrap();
    assert!(exact_kjsd(&sparse, 3).unwrap() > 0.0);
}

#[test]
fn bound_chain_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..20 {
        let pair = DiscretePair::random(2 + i % 3, &mut rng).unwrap();
        let kl = exact_kl(&pair);
        for k in 2..=4 {
            let j = exact_kjsd(&pair, k).unwrap();
            let t1 = theorem1_bound(kl, k).unwrap();
            let lower = kl - (exact_chi2(&pair) / k as f64).ln_1p() / ln2();
            assert!(j >= lower - 1e-9);
            assert!(t1 <= (k as f64).log2().min(kl) + 1e-9);
            for _ in 0..5 {
                let critic = TabularCritic::random(pair.alphabet_size(), 2.0, &mut rng).unwrap();
                assert!(infonce_objective(&pair, k, &critic).unwrap() <= j + 1e-9);
            }
            for c in [1e-3, 0.5, 7.0] {
                let scaled = pair.ratio_critic().unwrap().scaled(c).unwrap();
                assert!((infonce_objective(&pair, k, &scaled).unwrap() - j).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn kjsd_can_exceed_theorem1_bound() {
    // Jensen on the concave log bounds E log(mean r) from above, so the
    // closed form is a lower bound on the K-way JSD, not an upper one.
    let pair = DiscretePair::new(vec![0.25, 0.75], vec![0.5, 0.5]).unwrap();
    let j = exact_kjsd(&pair, 2).unwrap();
    let t1 = theorem1_bound(exact_kl(&pair), 2).unwrap();
    assert!(j > t1 + 1e-3, "{j} vs {t1}");
}

#[test]
fn budget_guard_refuses() {
    let pair = DiscretePair::random(10, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let err = exact_kjsd(&pair, 8).unwrap_err();
    assert!(matches!(err, Error::Budget { .. }));
    let critic = TabularCritic::new(vec![1.0; 10]).unwrap();
    let err = exact_population_loss(&pair, 7, 1.0, &critic, &GeneratingFunction::SymLog).unwrap_err();
    assert!(matches!(err, Error::Budget { .. }));
}

#[test]
fn population_loss_symmetric_example() {
    let same = DiscretePair::new(vec![0.4, 0.6], vec![0.4, 0.6]).unwrap();
    let critic = same.ratio_critic().unwrap();
    let v = exact_population_loss(&same, 1, 1.0, &critic, &GeneratingFunction::SymLog).unwrap();
    assert!((v - ln2()).abs() < 1e-15);
}

#[test]
fn population_loss_at_ratio_is_cross_entropy_optimum() {
    // at r*, the loss is the conditional entropy of z given x_{1:K}
    let pair = binary();
    let (k, nu) = (2usize, 1.0);
    let critic = pair.ratio_critic().unwrap();
    let v = exact_population_loss(&pair, k, nu, &critic, &GeneratingFunction::SymLog).unwrap();
    let mut h = 0.0;
    let r = pair.ratio();
    for_each_tuple(2, k, |x| {
        let ratios: Vec<f64> = x.iter().map(|&i| r[i]).collect();
        let post = exact_posterior(&ratios, nu).unwrap();
        let marginal: f64 = x.iter().map(|&i| pair.q0()[i]).product::<f64>() * (nu + ratios.iter().sum::<f64>())
            / (k as f64 + nu);
        for p in post.as_slice() {
            if *p > 0.0 {
                h -= marginal * p * p.ln();
            }
        }
    });
    assert!((v - h).abs() < 1e-12, "{v} vs {h}");
}

#[test]
fn population_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pair = DiscretePair::random(3, &mut rng).unwrap();
    let x: Vec<f64> = vec![0.3, -0.4, 0.9];
    for rule in [GeneratingFunction::SymLog, GeneratingFunction::SymPseudospherical(2.0), GeneratingFunction::SymPower(1.5)] {
        for (k, nu) in [(1, 1.0), (2, 0.5), (3, 0.0)] {
            let (_, g) = population_loss_grad(&pair, k, nu, &x, &rule).unwrap();
            for i in 0..3 {
                let mut hi = x.clone();
                let mut lo = x.clone();
                hi[i] += 1e-5;
                lo[i] -= 1e-5;
                let fd = (population_loss_grad(&pair, k, nu, &hi, &rule).unwrap().0
                    - population_loss_grad(&pair, k, nu, &lo, &rule).unwrap().0)
                    / 2e-5;
                assert!((fd - g[i]).abs() < 1e-7 * g[i].abs().max(1.0), "{rule:?} k={k} nu={nu}");
            }
        }
    }
}

#[test]
fn bregman_gap_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for rule in [GeneratingFunction::SymLog, GeneratingFunction::SymPseudospherical(2.0)] {
        for i in 0..5 {
            let pair = DiscretePair::random(2 + i % 3, &mut rng).unwrap();
            let optimal = pair.ratio_critic().unwrap();
            for (k, nu) in [(1, 1.0), (2, 0.5), (3, 2.0)] {
                let critic = TabularCritic::random(pair.alphabet_size(), 1.5, &mut rng).unwrap();
                let gap = exact_population_loss(&pair, k, nu, &critic, &rule).unwrap()
                    - exact_population_loss(&pair, k, nu, &optimal, &rule).unwrap();
                let b = bregman_gap(&pair, k, nu, &critic, &rule).unwrap();
                assert!(b >= 0.0);
                assert!((gap - b).abs() < 1e-10, "{rule:?}: {gap} vs {b}");
            }
        }
    }
}

#[test]
fn monte_carlo_agrees_with_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pair = DiscretePair::random(3, &mut rng).unwrap();
    let critic = TabularCritic::random(3, 1.0, &mut rng).unwrap();
    for rule in [GeneratingFunction::SymLog, GeneratingFunction::SymPseudospherical(2.0)] {
        for (k, nu) in [(2, 1.0), (3, 0.0)] {
            let exact = exact_population_loss(&pair, k, nu, &critic, &rule).unwrap();
            let (mean, se) = monte_carlo_population_loss(&pair, k, nu, &critic, &rule, 100_000, &mut rng).unwrap();
            assert!((mean - exact).abs() < 3.0 * se, "{rule:?}: {mean} +- {se} vs {exact}");
        }
    }
}

#[test]
fn optimum_is_true_ratio() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pair = DiscretePair::random(3, &mut rng).unwrap();
    let ratio = pair.ratio();
    for rule in [GeneratingFunction::SymLog, GeneratingFunction::SymPseudospherical(2.0)] {
        for (k, nu) in [(1, 1.0), (2, 1.0), (3, 0.5)] {
            let m = brute_force_optimum(&pair, k, nu, &rule, &MinimizeOptions::default()).unwrap();
            assert!(m.grad_norm < 1e-8);
            let r = m.critic().unwrap();
            for (a, b) in r.values().iter().zip(&ratio) {
                assert!((a - b).abs() < 1e-3, "{rule:?} k={k} nu={nu}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn optimum_without_anchor_is_ratio_up_to_constant() {
    let pair = DiscretePair::random(4, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let m = brute_force_optimum(&pair, 2, 0.0, &GeneratingFunction::SymLog, &MinimizeOptions::default()).unwrap();
    let r = m.critic().unwrap();
    let c: Vec<f64> = r.values().iter().zip(pair.ratio()).map(|(a, b)| a / b).collect();
    let (lo, hi) = c.iter().fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(*v), h.max(*v)));
    assert!((hi - lo) / lo < 1e-3);
}

#[test]
fn optimum_for_identical_distributions_is_one() {
    let same = DiscretePair::new(vec![0.1, 0.5, 0.4], vec![0.1, 0.5, 0.4]).unwrap();
    let m = brute_force_optimum(&same, 2, 1.0, &GeneratingFunction::SymLog, &MinimizeOptions::default()).unwrap();
    for v in m.critic().unwrap().values() {
        assert!((v - 1.0).abs() < 1e-6);
    }
}

#[test]
fn pair_objective_optima() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let pair = DiscretePair::random(4, &mut rng).unwrap();
    let ratio = pair.ratio();
    let kl_nats = exact_kl(&pair) * ln2();
    let objectives = [
        PairObjective::NwjRatio,
        PairObjective::Js,
        PairObjective::GeneralizedDv(2.0),
        PairObjective::AsymDre(GeneratingFunction::AsymPower(2.0)),
        PairObjective::AsymDre(GeneratingFunction::AsymLog),
        PairObjective::AsymDre(GeneratingFunction::AsymInverseLog),
    ];
    for obj in objectives {
        let m = minimize_with_restarts(4, |x| pair_loss(&pair, obj, x), &MinimizeOptions::default()).unwrap();
        let r = m.critic().unwrap();
        for (a, b) in r.values().iter().zip(&ratio) {
            assert!((a - b).abs() < 1e-3, "{obj:?}: {a} vs {b}");
        }
        assert!((plug_in(&pair, &r) - kl_nats).abs() < 1e-3);
    }
    let exact = plug_in(&pair, &pair.ratio_critic().unwrap());
    assert!((exact - kl_nats).abs() < 1e-12);
}

#[test]
fn pair_gradients_match_finite_differences() {
    let pair = DiscretePair::random(3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let x = vec![0.2, -0.7, 0.5];
    let objectives = [
        PairObjective::Dv,
        PairObjective::NwjRatio,
        PairObjective::Js,
        PairObjective::GeneralizedDv(0.0),
        PairObjective::GeneralizedDv(3.0),
        PairObjective::GeneralizedDv(f64::INFINITY),
        PairObjective::AsymDre(GeneratingFunction::AsymPower(0.5)),
        PairObjective::AsymDre(GeneratingFunction::AsymLog),
        PairObjective::AsymDre(GeneratingFunction::AsymInverseLog),
    ];
    for obj in objectives {
        let (_, g) = pair_loss(&pair, obj, &x).unwrap();
        for i in 0..3 {
            let mut hi = x.clone();
            let mut lo = x.clone();
            hi[i] += 1e-6;
            lo[i] -= 1e-6;
            let fd = (pair_loss(&pair, obj, &hi).unwrap().0 - pair_loss(&pair, obj, &lo).unwrap().0) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-7, "{obj:?}");
        }
    }
    assert!(pair_loss(&pair, PairObjective::AsymDre(GeneratingFunction::SymLog), &x).is_err());
}

#[test]
fn generalized_dv_interpolates() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let betas = [0.0, 0.25, 1.0, 4.0, 16.0, f64::INFINITY];
    for i in 0..20 {
        let pair = DiscretePair::random(2 + i % 4, &mut rng).unwrap();
        let x: Vec<f64> = TabularCritic::random(pair.alphabet_size(), 1.5, &mut rng).unwrap().log_values();
        let bounds: Vec<f64> =
            betas.iter().map(|&b| -pair_loss(&pair, PairObjective::GeneralizedDv(b), &x).unwrap().0).collect();
        for w in bounds.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!((bounds[0] + pair_loss(&pair, PairObjective::Dv, &x).unwrap().0).abs() < 1e-10);
        assert!((bounds[5] + pair_loss(&pair, PairObjective::NwjRatio, &x).unwrap().0).abs() < 1e-10);
    }
    let pair = binary();
    let log_ratio: Vec<f64> = pair.ratio().iter().map(|r| r.ln()).collect();
    let kl_nats = exact_kl(&pair) * ln2();
    let at_zero = -pair_loss(&pair, PairObjective::GeneralizedDv(0.0), &log_ratio).unwrap().0;
    assert!((at_zero - kl_nats).abs() < 1e-12);
    // E_q0[r*] = 1, so every beta is tight at r*; a shifted critic separates them
    let shifted: Vec<f64> = log_ratio.iter().map(|v| v + 0.3).collect();
    let dv = -pair_loss(&pair, PairObjective::GeneralizedDv(0.0), &shifted).unwrap().0;
    let mid = -pair_loss(&pair, PairObjective::GeneralizedDv(1.0), &shifted).unwrap().0;
    assert!((dv - kl_nats).abs() < 1e-12 && mid < dv);
}

#[test]
fn minimizer_reports_stall() {
    let options = MinimizeOptions { max_iter: 3, restarts: 1, ..MinimizeOptions::default() };
    let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        Ok((x.iter().map(|v| (v - 1.3).powi(4)).sum(), x.iter().map(|v| 4.0 * (v - 1.3).powi(3)).collect()))
    };
    let err = minimize_with_restarts(2, f, &options);
    assert!(matches!(err, Err(Error::Numeric(_))), "{err:?}");
    let m = minimize_tabular(vec![5.0, -2.0], |x| Ok((x.iter().map(|v| v * v).sum(), x.iter().map(|v| 2.0 * v).collect())), &MinimizeOptions::default()).unwrap();
    assert!(m.grad_norm < 1e-10);
}

