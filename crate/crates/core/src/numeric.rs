//! Scalar helpers shared by every module: stable log-sum-exp, softplus and
//! unit conversion.

#[allow(unused_imports)]
pub(crate) use num_traits::Float;

pub const LN_2: f64 = core::f64::consts::LN_2;

/// Converts a divergence from nats to bits.
#[inline]
pub fn nats_to_bits(nats: f64) -> f64 {
    nats / LN_2
}

#[inline]
pub fn bits_to_nats(bits: f64) -> f64 {
    bits * LN_2
}

/// `log(sum(exp(v)))` with max-subtraction. Entries may be `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `log(mean(exp(v)))`.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    log_sum_exp(values) - (values.len() as f64).ln()
}

/// `log(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `log(softplus(x))`, accurate for very negative `x` where softplus underflows.
#[inline]
pub fn log_softplus(x: f64) -> f64 {
    if x < -700.0 {
        x
    } else {
        softplus(x).ln()
    }
}

/// `log(softplus(x) + floor)` given `ln_floor = log(floor)`.
#[inline]
pub fn log_softplus_floor(x: f64, ln_floor: f64) -> f64 {
    let a = log_softplus(x);
    let m = a.max(ln_floor);
    m + ((a - m).exp() + (ln_floor - m).exp()).ln()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax of `v` into `out` (same length); returns the log-normaliser.
pub fn softmax_into(values: &[f64], out: &mut [f64]) -> f64 {
    let lse = log_sum_exp(values);
    for (o, &v) in out.iter_mut().zip(values) {
        *o = (v - lse).exp();
    }
    lse
}
