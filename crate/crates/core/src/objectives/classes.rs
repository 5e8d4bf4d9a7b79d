//! Per-row classification losses shared by the anchored objectives and the
//! exact oracle.

use alloc::vec::Vec;

#[allow(unused_imports)]
use crate::numeric::Float;
use crate::numeric::softmax_into;
use crate::scoring::{loss_and_eta_grad, GeneratingFunction};

/// Probabilities are kept inside `[ETA_FLOOR, 1 - ETA_FLOOR]` when clipping.
pub const ETA_FLOOR: f64 = 1e-12;

/// Reusable buffers for [`class_loss`].
#[derive(Debug, Default, Clone)]
pub struct ClassScratch {
    full: Vec<f64>,
    eta: Vec<f64>,
    mask: Vec<f64>,
}

/// `lambda_target(eta)` where `eta` is the posterior over
/// `[anchor (if ln_nu is given), logits...]`, and the gradient of that value
/// with respect to `logits` written into `grad`.
///
/// `target` is `None` for the anchor class and `Some(i)` for `logits[i]`.
/// With `clip`, `eta` is clamped away from the simplex boundary before the
/// loss is applied; the log score never needs it and is computed in log space.
pub fn class_loss(
    rule: &GeneratingFunction,
    ln_nu: Option<f64>,
    logits: &[f64],
    target: Option<usize>,
    clip: bool,
    scratch: &mut ClassScratch,
    grad: &mut [f64],
) -> f64 {
    let offset = usize::from(ln_nu.is_some());
    let tz = match target {
        None => 0,
        Some(i) => i + offset,
    };
    let full = &mut scratch.full;
    full.clear();
    full.extend(ln_nu);
    full.extend_from_slice(logits);
    let n = full.len();
    scratch.eta.resize(n, 0.0);
    let lse = softmax_into(full, &mut scratch.eta);
    let eta = &mut scratch.eta;

    if let GeneratingFunction::SymLog = rule {
        grad[..logits.len()].copy_from_slice(&eta[offset..offset + logits.len()]);
        if tz >= offset {
            grad[tz - offset] -= 1.0;
        }
        return lse - full[tz];
    }

    let mask = &mut scratch.mask;
    mask.clear();
    mask.resize(n, 1.0);
    let raw: Vec<f64> = if clip { eta.clone() } else { Vec::new() };
    if clip {
        for (e, m) in eta.iter_mut().zip(mask.iter_mut()) {
            let c = e.clamp(ETA_FLOOR, 1.0 - ETA_FLOOR);
            if c != *e {
                *m = 0.0;
                *e = c;
            }
        }
    }
    let (value, mut g) = loss_and_eta_grad(rule, eta, tz);
    let probs: &[f64] = if clip { &raw } else { eta };
    for (gj, m) in g.iter_mut().zip(mask.iter()) {
        *gj *= m;
    }
    let inner: f64 = g.iter().zip(probs).map(|(a, b)| a * b).sum();
    for (k, gk) in grad[..logits.len()].iter_mut().enumerate() {
        let j = k + offset;
        *gk = probs[j] * (g[j] - inner);
    }
    value
}
