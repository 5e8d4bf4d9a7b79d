//! Minibatch losses over a `B x B` score matrix.
//!
//! Diagonal entries are joint samples; the `B (B - 1)` off-diagonal entries
//! serve as samples from the product of marginals. Every loss returns its
//! value together with the gradient with respect to the log-scores.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use crate::numeric::Float;
use super::classes::{class_loss, ClassScratch};
use super::{LossEval, LossValue};
use crate::critics::ScoreMatrix;
use crate::error::{config, numeric, Error, Result};
use crate::linalg::Matrix;
use crate::numeric::{log_mean_exp, log_sum_exp, sigmoid, softplus};
use crate::scoring::GeneratingFunction;

fn batch_of(scores: &ScoreMatrix, needed: usize) -> Result<usize> {
    let b = scores.batch_size();
    if b < needed {
        return Err(Error::Batch { needed, found: b });
    }
    Ok(b)
}

fn off_diagonal(scores: &ScoreMatrix) -> Vec<f64> {
    let b = scores.batch_size();
    let l = scores.log_values();
    let mut out = Vec::with_capacity(b * (b - 1));
    for i in 0..b {
        for j in 0..b {
            if i != j {
                out.push(l[(i, j)]);
            }
        }
    }
    out
}

fn mean_diag(scores: &ScoreMatrix) -> f64 {
    let d = scores.log_values().diag();
    d.iter().sum::<f64>() / d.len() as f64
}

fn finish(total_joint: f64, total_anchor: f64, grad: Matrix, what: &str) -> Result<LossEval> {
    let value = LossValue::new(total_joint, total_anchor);
    if !value.total.is_finite() || !grad.is_finite() {
        return Err(numeric(format!("{what} loss is not finite ({})", value.total)));
    }
    Ok(LossEval { value, grad })
}

/// `-E_joint[log r] + log E_marg[r]`.
pub fn loss_dv(scores: &ScoreMatrix) -> Result<LossEval> {
    let b = batch_of(scores, 2)?;
    let off = off_diagonal(scores);
    let lme = log_mean_exp(&off);
    let lse = lme + (off.len() as f64).ln();
    let mut grad = Matrix::zeros(b, b);
    let l = scores.log_values();
    for i in 0..b {
        for j in 0..b {
            grad[(i, j)] = if i == j { -1.0 / b as f64 } else { (l[(i, j)] - lse).exp() };
        }
    }
    finish(-mean_diag(scores), lme, grad, "DV")
}

/// `-E_joint[c] + E_marg[exp(c - 1)]` with `c = log r`.
pub fn loss_nwj(scores: &ScoreMatrix) -> Result<LossEval> {
    let b = batch_of(scores, 2)?;
    let n_off = (b * (b - 1)) as f64;
    let l = scores.log_values();
    let max = off_diagonal(scores).into_iter().fold(f64::NEG_INFINITY, f64::max);
    let mut grad = Matrix::zeros(b, b);
    let mut marginal = 0.0;
    for i in 0..b {
        for j in 0..b {
            if i == j {
                grad[(i, j)] = -1.0 / b as f64;
            } else {
                let t = (l[(i, j)] - 1.0).exp() / n_off;
                marginal += t;
                grad[(i, j)] = t;
            }
        }
    }
    if !marginal.is_finite() {
        return Err(numeric(format!("NWJ marginal term overflowed (max log-score {max})")));
    }
    finish(-mean_diag(scores), marginal, grad, "NWJ")
}

/// Ratio-scale NWJ bound `E_joint[log r] - E_marg[r] + 1`, tight at the
/// true ratio. Equals `-loss_nwj` evaluated at `c = 1 + log r`.
pub fn nwj_ratio_bound(scores: &ScoreMatrix) -> Result<f64> {
    batch_of(scores, 2)?;
    let off = off_diagonal(scores);
    let m = off.iter().map(|v| v.exp()).sum::<f64>() / off.len() as f64;
    let v = mean_diag(scores) - m + 1.0;
    if !v.is_finite() {
        return Err(numeric("NWJ bound is not finite"));
    }
    Ok(v)
}

/// MINE surrogate: DV with the marginal mean replaced by a running average
/// `ema` held constant under differentiation. The value is
/// `-E_joint[log r] + E_marg[r] / ema + log ema - 1`, which equals the DV loss
/// when `ema` equals the batch mean.
pub fn loss_mine(scores: &ScoreMatrix, ema: f64) -> Result<LossEval> {
    if !(ema > 0.0) || !ema.is_finite() {
        return Err(numeric(format!("MINE moving average must be positive, got {ema}")));
    }
    let b = batch_of(scores, 2)?;
    let n_off = (b * (b - 1)) as f64;
    let l = scores.log_values();
    let mut grad = Matrix::zeros(b, b);
    let mut marginal = 0.0;
    for i in 0..b {
        for j in 0..b {
            if i == j {
                grad[(i, j)] = -1.0 / b as f64;
            } else {
                let t = l[(i, j)].exp() / (ema * n_off);
                marginal += t;
                grad[(i, j)] = t;
            }
        }
    }
    finish(-mean_diag(scores), marginal + ema.ln() - 1.0, grad, "MINE")
}

/// Batch mean of the off-diagonal ratio-scale scores.
pub fn marginal_mean(scores: &ScoreMatrix) -> Result<f64> {
    batch_of(scores, 2)?;
    let off = off_diagonal(scores);
    Ok(off.iter().map(|v| v.exp()).sum::<f64>() / off.len() as f64)
}

/// `E_joint[softplus(-c)] + E_marg[softplus(c)]`.
pub fn loss_js(scores: &ScoreMatrix) -> Result<LossEval> {
    let b = batch_of(scores, 2)?;
    let n_off = (b * (b - 1)) as f64;
    let l = scores.log_values();
    let mut grad = Matrix::zeros(b, b);
    let (mut joint, mut marginal) = (0.0, 0.0);
    for i in 0..b {
        for j in 0..b {
            let c = l[(i, j)];
            if i == j {
                joint += softplus(-c) / b as f64;
                grad[(i, j)] = -sigmoid(-c) / b as f64;
            } else {
                marginal += softplus(c) / n_off;
                grad[(i, j)] = sigmoid(c) / n_off;
            }
        }
    }
    finish(joint, marginal, grad, "JS")
}

/// DV loss on log-scores clipped to `[-clip, clip]`; the gradient vanishes
/// on clipped entries. `clip = inf` is plain DV.
pub fn loss_smile(scores: &ScoreMatrix, clip: f64) -> Result<LossEval> {
    if !(clip > 0.0) {
        return Err(config(format!("SMILE clip must be positive, got {clip}")));
    }
    let b = batch_of(scores, 2)?;
    let l = scores.log_values();
    let clipped = l.map(|v| v.clamp(-clip, clip));
    let inner = loss_dv(&ScoreMatrix::from_log(clipped)?)?;
    let mut grad = inner.grad;
    for i in 0..b {
        for j in 0..b {
            if l[(i, j)].abs() > clip {
                grad[(i, j)] = 0.0;
            }
        }
    }
    Ok(LossEval { value: inner.value, grad })
}

/// `-(1/B) sum_b log(r_bb / ((1/B) sum_j r_bj))`.
pub fn loss_infonce(scores: &ScoreMatrix) -> Result<LossEval> {
    let b = batch_of(scores, 2)?;
    let l = scores.log_values();
    let mut grad = Matrix::zeros(b, b);
    let mut lse_mean = 0.0;
    for i in 0..b {
        let row = l.row(i);
        let lse = log_sum_exp(row);
        lse_mean += lse / b as f64;
        for j in 0..b {
            grad[(i, j)] = (row[j] - lse).exp() / b as f64;
        }
        grad[(i, i)] -= 1.0 / b as f64;
    }
    finish(-mean_diag(scores), lse_mean - (b as f64).ln(), grad, "InfoNCE")
}

/// Column layout of the anchored minibatch objectives for row `b`: the joint
/// class uses the diagonal plus every column except `b` and `b - 1 (mod B)`;
/// the anchor class uses every column except `b`.
fn joint_columns(b: usize, batch: usize) -> impl Iterator<Item = usize> {
    let prev = (b + batch - 1) % batch;
    (0..batch).filter(move |&j| j != b && j != prev)
}

fn check_nu(nu: f64, k: usize) -> Result<()> {
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(config(format!("nu must be finite and nonnegative, got {nu}")));
    }
    if nu == 0.0 && k < 2 {
        return Err(config("nu = 0 needs K >= 2 (a batch of at least 3)"));
    }
    Ok(())
}

/// Anchored objective under an arbitrary symmetric-invariant rule, with
/// `K = B - 1`:
/// `K/(K+nu) E_joint[lambda_1(eta)] + nu/(K+nu) E_anchor[lambda_0(eta)]`.
///
/// Row `b` provides one joint tuple (positive `r_bb` plus `K - 1` negatives)
/// and, for `nu > 0`, one anchor tuple (the `K` off-diagonal scores).
pub fn loss_scored_anchor(rule: &GeneratingFunction, scores: &ScoreMatrix, nu: f64) -> Result<LossEval> {
    rule.validate()?;
    let b = batch_of(scores, 2)?;
    let k = b - 1;
    check_nu(nu, k)?;
    if nu == 0.0 && !rule.is_symmetric() {
        return Err(config(format!("{} needs an anchor class (nu > 0)", rule.name())));
    }
    let l = scores.log_values();
    let ln_nu = (nu > 0.0).then(|| nu.ln());
    let (w_joint, w_anchor) = (k as f64 / (k as f64 + nu), nu / (k as f64 + nu));
    let mut grad = Matrix::zeros(b, b);
    let mut scratch = ClassScratch::default();
    let mut logits = Vec::with_capacity(b);
    let mut cols = Vec::with_capacity(b);
    let mut g = vec![0.0; b];
    let (mut joint, mut anchor) = (0.0, 0.0);
    for i in 0..b {
        cols.clear();
        cols.push(i);
        cols.extend(joint_columns(i, b));
        logits.clear();
        logits.extend(cols.iter().map(|&j| l[(i, j)]));
        let v = class_loss(rule, ln_nu, &logits, Some(0), true, &mut scratch, &mut g);
        joint += w_joint * v / b as f64;
        for (&j, gj) in cols.iter().zip(&g) {
            grad[(i, j)] += w_joint * gj / b as f64;
        }
        if let Some(a) = ln_nu {
            cols.clear();
            cols.extend((0..b).filter(|&j| j != i));
            logits.clear();
            logits.extend(cols.iter().map(|&j| l[(i, j)]));
            let v = class_loss(rule, Some(a), &logits, None, true, &mut scratch, &mut g);
            anchor += w_anchor * v / b as f64;
            for (&j, gj) in cols.iter().zip(&g) {
                grad[(i, j)] += w_anchor * gj / b as f64;
            }
        }
    }
    finish(joint, anchor, grad, "anchored")
}

/// InfoNCE-anchor: the anchored objective under the log score, computed in
/// log space with an augmented `log nu` column.
pub fn loss_infonce_anchor(scores: &ScoreMatrix, nu: f64) -> Result<LossEval> {
    loss_scored_anchor(&GeneratingFunction::SymLog, scores, nu)
}

/// Generalised DV loss
/// `-[E_joint[log r] - (beta+1) log(beta/(beta+1) + E_marg[r]/(beta+1))]`;
/// `beta = 0` is DV and `beta = inf` the ratio-scale NWJ form
/// `-[E_joint[log r] - E_marg[r] + 1]`.
pub fn loss_generalized_dv(scores: &ScoreMatrix, beta: f64) -> Result<LossEval> {
    if !(beta >= 0.0) {
        return Err(config(format!("beta must be nonnegative or inf, got {beta}")));
    }
    let b = batch_of(scores, 2)?;
    let off = off_diagonal(scores);
    let n_off = off.len() as f64;
    let lme = log_mean_exp(&off);
    let m = lme.exp();
    let anchor = if beta == 0.0 {
        lme
    } else if beta.is_infinite() {
        m - 1.0
    } else if m.is_finite() {
        (beta + 1.0) * ((m - 1.0) / (beta + 1.0)).ln_1p()
    } else {
        let c = (beta + 1.0).ln();
        (beta + 1.0) * log_sum_exp(&[beta.ln() - c, lme - c])
    };
    // d anchor / d log r_j = softmax_j * m (beta+1) / (beta+m)
    let factor = if beta.is_infinite() { m } else { (beta + 1.0) / (beta / m + 1.0) };
    let l = scores.log_values();
    let lse = lme + n_off.ln();
    let mut grad = Matrix::zeros(b, b);
    for i in 0..b {
        for j in 0..b {
            grad[(i, j)] = if i == j { -1.0 / b as f64 } else { (l[(i, j)] - lse).exp() * factor };
        }
    }
    finish(-mean_diag(scores), anchor, grad, "generalised DV")
}

/// Density-ratio losses from asymmetric rules; they do not involve `K` or `nu`.
///
/// - `asym_log`: `E_joint[-log r] + E_marg[r]`
/// - `asym_power(a)`: `E_joint[r^(a-1) / (1-a)] + E_marg[r^a / a]`
/// - `asym_inverse_log`: `E_joint[1/r] + E_marg[log r]`
pub fn loss_asym_dre(rule: &GeneratingFunction, scores: &ScoreMatrix) -> Result<LossEval> {
    rule.validate()?;
    let b = batch_of(scores, 2)?;
    let n_off = (b * (b - 1)) as f64;
    let bf = b as f64;
    let l = scores.log_values();
    let mut grad = Matrix::zeros(b, b);
    let (mut joint, mut marginal) = (0.0, 0.0);
    for i in 0..b {
        for j in 0..b {
            let c = l[(i, j)];
            let (v, g) = match (*rule, i == j) {
                (GeneratingFunction::AsymLog, true) => (-c / bf, -1.0 / bf),
                (GeneratingFunction::AsymLog, false) => (c.exp() / n_off, c.exp() / n_off),
                (GeneratingFunction::AsymPower(a), true) => {
                    let t = ((a - 1.0) * c).exp();
                    (t / ((1.0 - a) * bf), -t / bf)
                }
                (GeneratingFunction::AsymPower(a), false) => {
                    let t = (a * c).exp();
                    (t / (a * n_off), t / n_off)
                }
                (GeneratingFunction::AsymInverseLog, true) => ((-c).exp() / bf, -(-c).exp() / bf),
                (GeneratingFunction::AsymInverseLog, false) => (c / n_off, 1.0 / n_off),
                _ => return Err(config(format!("{} is not an asymmetric rule", rule.name()))),
            };
            if i == j {
                joint += v;
            } else {
                marginal += v;
            }
            grad[(i, j)] = g;
        }
    }
    finish(joint, marginal, grad, "DRE")
}

/// Pearson chi-squared density-ratio fitting loss `-E_joint[r] + E_marg[r^2] / 2`.
pub fn loss_chi2(scores: &ScoreMatrix) -> Result<LossEval> {
    let b = batch_of(scores, 2)?;
    let n_off = (b * (b - 1)) as f64;
    let r = scores.values();
    let mut grad = Matrix::zeros(b, b);
    let (mut joint, mut marginal) = (0.0, 0.0);
    for i in 0..b {
        for j in 0..b {
            let v = r[(i, j)];
            if i == j {
                joint -= v / b as f64;
                grad[(i, j)] = -v / b as f64;
            } else {
                marginal += 0.5 * v * v / n_off;
                grad[(i, j)] = v * v / n_off;
            }
        }
    }
    finish(joint, marginal, grad, "chi-squared")
}

/// Anchored log-score objective contrasting joint pairs against product
/// pairs. Product pairs are `p_j = (x_j, y_{j+1 mod B})`. Row `b` yields the
/// joint tuple `(r_bb; p_j for j not in {b, b-1})` and the anchor tuple
/// `(p_j for j != b)`, so `K = B - 1` as in the other anchored losses.
pub fn loss_joint_marginal_anchor(scores: &ScoreMatrix, nu: f64) -> Result<LossEval> {
    let b = batch_of(scores, 2)?;
    let k = b - 1;
    check_nu(nu, k)?;
    let l = scores.log_values();
    let product = |j: usize| (j, (j + 1) % b);
    let ln_nu = (nu > 0.0).then(|| nu.ln());
    let (w_joint, w_anchor) = (k as f64 / (k as f64 + nu), nu / (k as f64 + nu));
    let rule = GeneratingFunction::SymLog;
    let mut grad = Matrix::zeros(b, b);
    let mut scratch = ClassScratch::default();
    let mut cells: Vec<(usize, usize)> = Vec::with_capacity(b);
    let mut logits = Vec::with_capacity(b);
    let mut g = vec![0.0; b];
    let (mut joint, mut anchor) = (0.0, 0.0);
    for i in 0..b {
        cells.clear();
        cells.push((i, i));
        cells.extend(joint_columns(i, b).map(product));
        logits.clear();
        logits.extend(cells.iter().map(|&c| l[c]));
        let v = class_loss(&rule, ln_nu, &logits, Some(0), false, &mut scratch, &mut g);
        joint += w_joint * v / b as f64;
        for (&c, gj) in cells.iter().zip(&g) {
            grad[c] += w_joint * gj / b as f64;
        }
        if let Some(a) = ln_nu {
            cells.clear();
            cells.extend((0..b).filter(|&j| j != i).map(product));
            logits.clear();
            logits.extend(cells.iter().map(|&c| l[c]));
            let v = class_loss(&rule, Some(a), &logits, None, false, &mut scratch, &mut g);
            anchor += w_anchor * v / b as f64;
            for (&c, gj) in cells.iter().zip(&g) {
                grad[c] += w_anchor * gj / b as f64;
            }
        }
    }
    finish(joint, anchor, grad, "joint/marginal anchored")
}
