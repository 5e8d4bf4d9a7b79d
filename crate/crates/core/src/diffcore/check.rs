use alloc::format;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Gradients, ParamStore};
use crate::error::{numeric, Error, Result};

/// Above this many scalars the check runs on a seeded random subsample.
pub const FULL_CHECK_LIMIT: usize = 10_000;
const SUBSAMPLE: usize = 1_000;

/// Relative error with denominator `max(|analytic|, |numeric|, 1e-8)`.
#[inline]
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(Error::Config(format!("finite-difference eps must lie in (0, 1e-2], got {eps}")));
    }
    Ok(())
}

/// Compares the analytic gradient returned by `loss_fn` with central
/// differences over the parameters and returns the largest relative error.
pub fn finite_diff_check<F>(mut loss_fn: F, params: &ParamStore, eps: f64) -> Result<f64>
where
    F: FnMut(&ParamStore) -> Result<(f64, Gradients)>,
{
    check_eps(eps)?;
    let (loss, grads) = loss_fn(params)?;
    if !loss.is_finite() {
        return Err(numeric(format!("loss is {loss}")));
    }
    let n = params.num_scalars();
    let coords: Vec<usize> = if n > FULL_CHECK_LIMIT {
        let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed());
        let mut idx = sample(&mut rng, n, SUBSAMPLE).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..n).collect()
    };
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for k in coords {
        let x = params.flat_get(k);
        probe.flat_set(k, x + eps);
        let (up, _) = loss_fn(&probe)?;
        probe.flat_set(k, x - eps);
        let (down, _) = loss_fn(&probe)?;
        probe.flat_set(k, x);
        if !up.is_finite() || !down.is_finite() {
            return Err(numeric(format!("loss became non-finite while probing coordinate {k}")));
        }
        let fd = (up - down) / (2.0 * eps);
        worst = worst.max(relative_error(grads.flat_get(k), fd));
    }
    Ok(worst)
}

/// Central-difference check of `analytic` against `f` at `x`.
pub fn finite_diff_vector<F>(mut f: F, x: &[f64], analytic: &[f64], eps: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    check_eps(eps)?;
    if x.len() != analytic.len() {
        return Err(Error::Dimension {
            op: "finite_diff_vector",
            expected: (x.len(), 1),
            found: (analytic.len(), 1),
        });
    }
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for k in 0..x.len() {
        probe[k] = x[k] + eps;
        let up = f(&probe)?;
        probe[k] = x[k] - eps;
        let down = f(&probe)?;
        probe[k] = x[k];
        if !up.is_finite() || !down.is_finite() {
            return Err(numeric(format!("function non-finite while probing coordinate {k}")));
        }
        worst = worst.max(relative_error(analytic[k], (up - down) / (2.0 * eps)));
    }
    Ok(worst)
}
