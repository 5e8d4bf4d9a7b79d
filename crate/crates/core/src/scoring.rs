//! Proper scoring rules induced by convex generating functions.
//!
//! A rule over classes `{0, ..., M}` is described by a [`GeneratingFunction`]:
//!
//! - *asymmetric* kinds are binary generators `psi(rho)` on ratios, extended
//!   separably: `Psi(rho) = sum_i psi(rho_i)` over `rho = (1, rho_1, ..., rho_M)`;
//! - *symmetric* kinds are functions `Phi(eta)` on the simplex, lifted to
//!   ratio space by the perspective `Psi_Phi(rho) = |rho|_1 Phi(rho / |rho|_1)`.
//!
//! The induced loss vector at `eta` is
//! `lambda_0 = <rho, grad Psi(rho)> - Psi(rho)`, `lambda_i = -d Psi / d rho_i`
//! with `rho = eta / eta_0` ([`induced_loss`]). For symmetric kinds the same
//! vector is `(<eta, grad Phi> - Phi) 1 - grad Phi` ([`induced_loss_phi`]).
//! Gradients of `Psi` are taken over the free coordinates `rho_1..rho_M`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use crate::numeric::Float;
use crate::error::{config, domain, Result};

/// Generating function of a proper scoring rule. Exponents must avoid 0 and 1.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", content = "alpha", rename_all = "snake_case"))]
pub enum GeneratingFunction {
    /// `psi(rho) = rho log rho` (KLIEP / NWJ).
    AsymLog,
    /// `psi(rho) = rho^a / (a (a - 1))` (robust DRE; chi-squared at `a = 2`).
    AsymPower(f64),
    /// `psi(rho) = -log rho`.
    AsymInverseLog,
    /// `Phi(eta) = <eta, log eta>` (log score).
    SymLog,
    /// `Phi(eta) = |eta|_a^a / (a (a - 1))` (Tsallis; Brier at `a = 2`).
    SymPower(f64),
    /// `Phi(eta) = -sum log eta_z`.
    SymInverseLog,
    /// `Phi(eta) = (M+1)^(-1/a) / (a - 1) |eta|_a` (spherical at `a = 2`).
    SymPseudospherical(f64),
}

impl GeneratingFunction {
    /// Parses `name` (`asym_log`, `asym_power`, `asym_inverse_log`, `sym_log`,
    /// `sym_power`, `sym_inverse_log`, `sym_pseudospherical`) with an optional
    /// exponent.
    pub fn from_name(name: &str, alpha: Option<f64>) -> Result<Self> {
        let need_alpha = || alpha.ok_or_else(|| config(format!("rule '{name}' needs an alpha")));
        let gen = match name {
            "asym_log" => Self::AsymLog,
            "asym_power" => Self::AsymPower(need_alpha()?),
            "asym_inverse_log" => Self::AsymInverseLog,
            "sym_log" | "log" => Self::SymLog,
            "sym_power" => Self::SymPower(need_alpha()?),
            "sym_inverse_log" => Self::SymInverseLog,
            "sym_pseudospherical" | "spherical" => {
                Self::SymPseudospherical(alpha.unwrap_or(2.0))
            }
            other => return Err(config(format!("unknown scoring rule '{other}'"))),
        };
        gen.validate()?;
        Ok(gen)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::AsymLog => "asym_log",
            Self::AsymPower(_) => "asym_power",
            Self::AsymInverseLog => "asym_inverse_log",
            Self::SymLog => "sym_log",
            Self::SymPower(_) => "sym_power",
            Self::SymInverseLog => "sym_inverse_log",
            Self::SymPseudospherical(_) => "sym_pseudospherical",
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            Self::AsymPower(a) | Self::SymPower(a) | Self::SymPseudospherical(a) => Some(a),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self.alpha() {
            if !a.is_finite() || a == 0.0 || a == 1.0 {
                return Err(config(format!("{}: alpha must be finite and not 0 or 1, got {a}", self.name())));
            }
        }
        Ok(())
    }

    pub fn is_symmetric(&self) -> bool {
        matches!(
            self,
            Self::SymLog | Self::SymPower(_) | Self::SymInverseLog | Self::SymPseudospherical(_)
        )
    }

    /// `(psi, psi', psi'')` of an asymmetric binary generator at `rho > 0`.
    fn psi_scalar(&self, rho: f64) -> (f64, f64, f64) {
        match *self {
            Self::AsymLog => (rho * rho.ln(), rho.ln() + 1.0, 1.0 / rho),
            Self::AsymPower(a) => {
                let p = rho.powf(a - 2.0);
                (p * rho * rho / (a * (a - 1.0)), p * rho / (a - 1.0), p)
            }
            Self::AsymInverseLog => (-rho.ln(), -1.0 / rho, 1.0 / (rho * rho)),
            _ => unreachable!("psi_scalar on a symmetric kind"),
        }
    }
}

/// A point of the probability simplex over `M + 1 >= 2` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    pub fn new(eta: Vec<f64>) -> Result<Self> {
        if eta.len() < 2 {
            return Err(domain("a simplex point needs at least two classes"));
        }
        if eta.iter().any(|&e| !(e >= 0.0) || !e.is_finite()) {
            return Err(domain("simplex entries must be finite and nonnegative"));
        }
        let total: f64 = eta.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(domain(format!("simplex entries sum to {total}")));
        }
        Ok(Self(eta))
    }

    /// Normalises nonnegative weights onto the simplex.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(domain("weights must have a positive sum"));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_interior(&self) -> bool {
        self.0.iter().all(|&e| e > 0.0)
    }
}

/// `rho = (1, rho_1, ..., rho_M)` with the leading coordinate pinned to one.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioVector(Vec<f64>);

impl RatioVector {
    /// Full vector; the first entry must be exactly 1.
    pub fn new(rho: Vec<f64>) -> Result<Self> {
        if rho.len() < 2 || rho[0] != 1.0 {
            return Err(domain("a ratio vector starts with rho_0 = 1 and has at least one free entry"));
        }
        if rho.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(domain("ratio entries must be finite and nonnegative"));
        }
        Ok(Self(rho))
    }

    /// Builds `(1, tail...)`.
    pub fn from_tail(tail: &[f64]) -> Result<Self> {
        let mut v = Vec::with_capacity(tail.len() + 1);
        v.push(1.0);
        v.extend_from_slice(tail);
        Self::new(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn tail(&self) -> &[f64] {
        &self.0[1..]
    }

    /// Ratio vector of a simplex point: `eta / eta_0`.
    pub fn from_simplex(eta: &SimplexPoint) -> Result<Self> {
        let e = eta.as_slice();
        if !(e[0] > 0.0) {
            return Err(domain("eta_0 must be positive to form ratios"));
        }
        Self::new(e.iter().map(|v| v / e[0]).collect())
    }
}

fn require_interior(values: &[f64], what: &str) -> Result<()> {
    if values.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(domain(format!("{what} must be strictly positive and finite")));
    }
    Ok(())
}

fn require_symmetric(gen: &GeneratingFunction) -> Result<()> {
    gen.validate()?;
    if !gen.is_symmetric() {
        return Err(config(format!("{} is not a symmetric (simplex) generator", gen.name())));
    }
    Ok(())
}

/// `Phi(eta)` and its gradient for a symmetric kind. `eta` may be any
/// positive vector; the formulas are the natural extensions off the simplex.
pub fn phi_value_grad(gen: &GeneratingFunction, eta: &[f64]) -> Result<(f64, Vec<f64>)> {
    require_symmetric(gen)?;
    require_interior(eta, "eta")?;
    let classes = eta.len() as f64;
    Ok(match *gen {
        GeneratingFunction::SymLog => {
            let value = eta.iter().map(|e| e * e.ln()).sum();
            (value, eta.iter().map(|e| e.ln() + 1.0).collect())
        }
        GeneratingFunction::SymPower(a) => {
            let value = eta.iter().map(|e| e.powf(a)).sum::<f64>() / (a * (a - 1.0));
            (value, eta.iter().map(|e| e.powf(a - 1.0) / (a - 1.0)).collect())
        }
        GeneratingFunction::SymInverseLog => {
            let value = -eta.iter().map(|e| e.ln()).sum::<f64>();
            (value, eta.iter().map(|e| -1.0 / e).collect())
        }
        GeneratingFunction::SymPseudospherical(a) => {
            let c = classes.powf(-1.0 / a) / (a - 1.0);
            let norm = eta.iter().map(|e| e.powf(a)).sum::<f64>().powf(1.0 / a);
            let grad = eta.iter().map(|e| c * (e / norm).powf(a - 1.0)).collect();
            (c * norm, grad)
        }
        _ => unreachable!(),
    })
}

/// Perspective lift `Psi_Phi(rho) = (sum rho) Phi(rho / sum rho)` and its
/// gradient over `rho_1..rho_M`.
pub fn phi_to_psi(gen: &GeneratingFunction, rho: &RatioVector) -> Result<(f64, Vec<f64>)> {
    require_symmetric(gen)?;
    perspective(gen, rho.as_slice())
}

fn perspective(gen: &GeneratingFunction, full: &[f64]) -> Result<(f64, Vec<f64>)> {
    require_interior(full, "rho")?;
    let total: f64 = full.iter().sum();
    let eta: Vec<f64> = full.iter().map(|r| r / total).collect();
    let (phi, grad_phi) = phi_value_grad(gen, &eta)?;
    let inner: f64 = eta.iter().zip(&grad_phi).map(|(e, g)| e * g).sum();
    let grad = grad_phi[1..].iter().map(|g| phi + g - inner).collect();
    Ok((total * phi, grad))
}

/// `Psi(rho)` and its gradient over the free coordinates `rho_1..rho_M`.
pub fn psi_value_grad(gen: &GeneratingFunction, rho: &RatioVector) -> Result<(f64, Vec<f64>)> {
    psi_tail(gen, rho.tail())
}

pub(crate) fn psi_tail(gen: &GeneratingFunction, tail: &[f64]) -> Result<(f64, Vec<f64>)> {
    gen.validate()?;
    require_interior(tail, "rho tail")?;
    if gen.is_symmetric() {
        let mut full = Vec::with_capacity(tail.len() + 1);
        full.push(1.0);
        full.extend_from_slice(tail);
        perspective(gen, &full)
    } else {
        let mut value = 0.0;
        let mut grad = Vec::with_capacity(tail.len());
        for &r in tail {
            let (p, dp, _) = gen.psi_scalar(r);
            value += p;
            grad.push(dp);
        }
        Ok((value, grad))
    }
}

/// Loss vector induced through `Psi` at `rho = eta / eta_0`.
pub fn induced_loss(gen: &GeneratingFunction, eta: &SimplexPoint) -> Result<Vec<f64>> {
    if !eta.is_interior() {
        return Err(domain("induced loss needs an interior simplex point"));
    }
    let rho = RatioVector::from_simplex(eta)?;
    let (psi, grad) = psi_value_grad(gen, &rho)?;
    let inner: f64 = rho.tail().iter().zip(&grad).map(|(r, g)| r * g).sum();
    let mut lambda = Vec::with_capacity(grad.len() + 1);
    lambda.push(inner - psi);
    lambda.extend(grad.iter().map(|g| -g));
    Ok(lambda)
}

/// Loss vector `(<eta, grad Phi> - Phi) 1 - grad Phi` of a symmetric kind.
pub fn induced_loss_phi(gen: &GeneratingFunction, eta: &SimplexPoint) -> Result<Vec<f64>> {
    if !eta.is_interior() {
        return Err(domain("induced loss needs an interior simplex point"));
    }
    let (phi, grad) = phi_value_grad(gen, eta.as_slice())?;
    let inner: f64 = eta.as_slice().iter().zip(&grad).map(|(e, g)| e * g).sum();
    Ok(grad.iter().map(|g| inner - phi - g).collect())
}

/// Bregman divergence `Psi(u) - Psi(v) - <grad Psi(v), u - v>` between the
/// free coordinates of two ratio vectors.
pub fn bregman(gen: &GeneratingFunction, u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() || u.is_empty() {
        return Err(domain("bregman arguments must be nonempty and of equal length"));
    }
    let (pu, _) = psi_tail(gen, u)?;
    let (pv, gv) = psi_tail(gen, v)?;
    let lin: f64 = gv.iter().zip(u.iter().zip(v)).map(|(g, (a, b))| g * (a - b)).sum();
    Ok(pu - pv - lin)
}

/// `lambda_z(eta)` together with `d lambda_z / d eta` for an interior `eta`.
///
/// Used by the minibatch objectives: the gradient is chained through the
/// softmax that produces `eta`, so only its component tangent to the simplex
/// matters and the simple closed forms below suffice.
pub fn loss_and_eta_grad(gen: &GeneratingFunction, eta: &[f64], z: usize) -> (f64, Vec<f64>) {
    let n = eta.len();
    let mut grad = vec![0.0; n];
    let value = match *gen {
        GeneratingFunction::SymLog => {
            grad[z] = -1.0 / eta[z];
            -eta[z].ln()
        }
        GeneratingFunction::SymPower(a) => {
            let s: f64 = eta.iter().map(|e| e.powf(a)).sum();
            for (g, e) in grad.iter_mut().zip(eta) {
                *g = e.powf(a - 1.0);
            }
            grad[z] -= eta[z].powf(a - 2.0);
            s / a - eta[z].powf(a - 1.0) / (a - 1.0)
        }
        GeneratingFunction::SymInverseLog => {
            for (g, e) in grad.iter_mut().zip(eta) {
                *g = 1.0 / e;
            }
            grad[z] -= 1.0 / (eta[z] * eta[z]);
            eta.iter().map(|e| e.ln()).sum::<f64>() + 1.0 / eta[z] - n as f64
        }
        GeneratingFunction::SymPseudospherical(a) => {
            let c = (n as f64).powf(-1.0 / a) / (a - 1.0);
            let norm = eta.iter().map(|e| e.powf(a)).sum::<f64>().powf(1.0 / a);
            let ez = eta[z];
            let tail = ez.powf(a - 1.0) * norm.powf(1.0 - 2.0 * a);
            for (g, e) in grad.iter_mut().zip(eta) {
                *g = c * (a - 1.0) * tail * e.powf(a - 1.0);
            }
            grad[z] -= c * (a - 1.0) * ez.powf(a - 2.0) * norm.powf(1.0 - a);
            -c * (ez / norm).powf(a - 1.0)
        }
        GeneratingFunction::AsymLog | GeneratingFunction::AsymPower(_) | GeneratingFunction::AsymInverseLog => {
            let e0 = eta[0];
            if z == 0 {
                let mut value = 0.0;
                let mut d0 = 0.0;
                for k in 1..n {
                    let rho = eta[k] / e0;
                    let (p, dp, ddp) = gen.psi_scalar(rho);
                    value += rho * dp - p;
                    grad[k] = rho * ddp / e0;
                    d0 -= rho * rho * ddp / e0;
                }
                grad[0] = d0;
                value
            } else {
                let rho = eta[z] / e0;
                let (_, dp, ddp) = gen.psi_scalar(rho);
                grad[z] = -ddp / e0;
                grad[0] = ddp * rho / e0;
                -dp
            }
        }
    };
    (value, grad)
}
