//! Training loop and evaluation.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ratiomi_core::critics::{Critic, ScoreMatrix};
use ratiomi_core::diffcore::{Adam, AdamConfig};
use ratiomi_core::nats_to_bits;
use ratiomi_core::objectives::{plug_in_mi, EvalMode, TrainState};

use crate::config::BenchmarkConfig;
use crate::data::DataSource;
use crate::error::{HarnessError, Result};
use crate::report::{version, EstimateReport, TrajectoryPoint};

/// Trains a critic under `config` and reports its MI estimates.
///
/// Training and evaluation draw from separate streams of the seed, so the
/// evaluation schedule does not perturb the training batches. A non-finite
/// loss, gradient or parameter aborts with the trajectory so far.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<EstimateReport> {
    config.validate()?;
    let start = Instant::now();
    let source = DataSource::from_config(config)?;
    let (dx, dy) = source.dims();
    let mut critic = Critic::new(config.critic.clone(), dx, dy, config.seed)?;
    let mut adam = Adam::new(AdamConfig { learning_rate: config.learning_rate, ..AdamConfig::default() }, critic.params());
    let mut train_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(config.seed);
    eval_rng.set_stream(1);
    let mut state = TrainState::default();
    let mut report = EstimateReport {
        version: version().to_string(),
        config: config.clone(),
        trajectory: Vec::new(),
        final_mi_bits: f64::NAN,
        ground_truth_bits: source.ground_truth_bits(),
        estimator_type: config.eval_mode.estimator_type(),
        plug_in_consistent: config.eval_mode != EvalMode::Type3Plugin || config.objective.fisher_consistent(),
        wall_time_s: 0.0,
    };
    let diverged = |report: &mut EstimateReport, step: usize, message: String| {
        report.final_mi_bits = EstimateReport::window_mean(&report.trajectory);
        report.wall_time_s = start.elapsed().as_secs_f64();
        HarnessError::Divergence { step, message, partial: Box::new(report.clone()) }
    };

    for step in 1..=config.steps {
        let (xs, ys) = source.sample(config.batch_size, &mut train_rng);
        let outcome = critic.score_matrix(&xs, &ys).and_then(|scored| {
            let eval = config.objective.training_loss(&scored.scores, &mut state)?;
            let loss = eval.value.total;
            Ok((loss, scored.gradients(loss, eval.grad)?))
        });
        let (loss, grads) = match outcome {
            Ok(v) if v.0.is_finite() => v,
            Ok(v) => return Err(diverged(&mut report, step, format!("loss is {}", v.0))),
            Err(ratiomi_core::Error::Numeric(m)) => return Err(diverged(&mut report, step, m)),
            Err(e) => return Err(e.into()),
        };
        if let Err(e) = adam.step(critic.params_mut(), &grads) {
            return Err(diverged(&mut report, step, e.to_string()));
        }
        if let Some(name) = critic.params().first_non_finite() {
            return Err(diverged(&mut report, step, format!("parameter {name} is non-finite")));
        }
        if step % config.report_every == 0 || step == config.steps {
            let mi = match evaluate(config, &critic, &source, &mut eval_rng) {
                Ok(v) if v.is_finite() => v,
                Ok(v) => return Err(diverged(&mut report, step, format!("estimate is {v}"))),
                Err(HarnessError::Core(ratiomi_core::Error::Numeric(m))) => {
                    return Err(diverged(&mut report, step, m))
                }
                Err(e) => return Err(e),
            };
            log::debug!("step {step}: loss {loss:.5}, estimate {mi:.4} bits");
            report.trajectory.push(TrajectoryPoint { step, loss, mi_estimate_bits: mi });
        }
    }
    report.final_mi_bits = EstimateReport::window_mean(&report.trajectory);
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// MI estimate in bits averaged over `eval_batches` fresh batches.
fn evaluate(config: &BenchmarkConfig, critic: &Critic, source: &DataSource, rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut batches: Vec<ScoreMatrix> = Vec::with_capacity(config.eval_batches);
    for _ in 0..config.eval_batches {
        let (xs, ys) = source.sample(config.batch_size, rng);
        batches.push(critic.score_matrix(&xs, &ys)?.scores);
    }
    if config.eval_mode == EvalMode::Type3Plugin {
        return Ok(plug_in_mi(&config.objective, &batches)?.bits);
    }
    let mut total = 0.0;
    for s in &batches {
        total += config.objective.estimate(config.eval_mode, s)?;
    }
    Ok(nats_to_bits(total / batches.len() as f64))
}
