//! Targeted incentive policies over covariate cells.
//!
//! A policy draws a cell from `p` and offers the incentive there. With
//! per-cell compliance `δ_X` and complier effects `β`, the reach probability
//! is `P_C = Σ δ_X p`, the average effect `APE = Σ β δ_X p` and the local
//! effect `LAPE = APE / P_C`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    /// Targeting distribution over cells.
    pub p: Vec<f64>,
    /// Population cell probabilities.
    pub f: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyEffects {
    pub p_c: f64,
    pub ape: f64,
    /// `None` when no incentive reaches a complier.
    pub lape: Option<f64>,
}

const SUM_TOL: f64 = 1e-9;

fn check_same_len(what: &[(&str, &[f64])]) -> Result<usize> {
    let m = what[0].1.len();
    if m == 0 {
        return Err(Error::InvalidArgument(format!("{} is empty", what[0].0)));
    }
    for (name, v) in what {
        if v.len() != m {
            return Err(Error::InvalidArgument(format!("{name} has {} entries, expected {m}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!("{name} has non-finite entries")));
        }
    }
    Ok(m)
}

fn check_distribution(name: &str, v: &[f64], strictly_positive: bool) -> Result<()> {
    let bad = |x: f64| if strictly_positive { x <= 0.0 } else { x < 0.0 };
    if v.iter().any(|&x| bad(x)) {
        return Err(Error::InvalidArgument(format!("{name} has inadmissible entries")));
    }
    let total: f64 = v.iter().sum();
    if (total - 1.0).abs() > SUM_TOL {
        return Err(Error::InvalidArgument(format!("{name} sums to {total}, not 1")));
    }
    Ok(())
}

impl PolicySpec {
    pub fn new(p: Vec<f64>, f: Vec<f64>) -> Result<Self> {
        check_same_len(&[("p", &p), ("f", &f)])?;
        check_distribution("p", &p, false)?;
        check_distribution("f", &f, true)?;
        Ok(Self { p, f })
    }

    /// Instrument `b ∝ p / f` implied by the targeting distribution.
    pub fn instrument(&self) -> Vec<f64> {
        self.p.iter().zip(&self.f).map(|(p, f)| p / f).collect()
    }
}

/// `ω_j = b_j δ_X_j / Σ π b δ_X`, normalised so that `Σ π ω = 1`.
pub fn weights_from_instrument(b: &[f64], delta_x: &[f64], pi: &[f64]) -> Result<Vec<f64>> {
    check_same_len(&[("b", b), ("delta_x", delta_x), ("pi", pi)])?;
    if let Some(j) = (0..b.len()).find(|&j| b[j] * delta_x[j] < 0.0) {
        return Err(Error::SignViolation { index: j });
    }
    let denom: f64 = (0..b.len()).map(|j| pi[j] * b[j] * delta_x[j]).sum();
    if !(denom > 0.0) {
        return Err(Error::DegenerateDenominator);
    }
    Ok(b.iter().zip(delta_x).map(|(b, x)| b * x / denom).collect())
}

/// Targeting distribution `p_j = b_j f_j / Σ f b` that delivers the weighted
/// LATE with instrument `b` as its LAPE.
pub fn policy_from_instrument(b: &[f64], f: &[f64]) -> Result<PolicySpec> {
    check_same_len(&[("b", b), ("f", f)])?;
    check_distribution("f", f, true)?;
    if b.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidArgument("instrument must be nonnegative to define a policy".into()));
    }
    let denom: f64 = b.iter().zip(f).map(|(b, f)| b * f).sum();
    if !(denom > 0.0) {
        return Err(Error::DegenerateDenominator);
    }
    Ok(PolicySpec { p: b.iter().zip(f).map(|(b, f)| b * f / denom).collect(), f: f.to_vec() })
}

pub fn policy_effects(spec: &PolicySpec, beta: &[f64], delta_x: &[f64]) -> Result<PolicyEffects> {
    check_same_len(&[("p", &spec.p), ("beta", beta), ("delta_x", delta_x)])?;
    for (j, &x) in delta_x.iter().enumerate() {
        if x < 0.0 {
            return Err(Error::NegativeCompliance { index: j });
        }
        if x > 1.0 {
            return Err(Error::InvalidArgument(format!("delta_x[{j}] = {x} exceeds one")));
        }
    }
    let p_c: f64 = spec.p.iter().zip(delta_x).map(|(p, x)| p * x).sum();
    let ape: f64 = (0..beta.len()).map(|j| beta[j] * delta_x[j] * spec.p[j]).sum();
    Ok(PolicyEffects { p_c, ape, lape: (p_c > 0.0).then(|| ape / p_c) })
}
