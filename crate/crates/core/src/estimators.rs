//! Weighted LATEs built from per-cell discontinuities.
//!
//! Every estimand is a ratio `Σ c_j δ_Y(w_j) / Σ c_j δ_X(w_j)` with
//! `c_j = π_j b(w_j)` for an instrument `b`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{build_partition, Kernel, RddDataset};
use crate::error::{Error, Result};
use crate::localpoly::{cell_discontinuities, CellDiscontinuities};

pub const DEFAULT_ZERO_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum EstimandSpec {
    Cwlate,
    /// Unweighted mean of conditional LATEs.
    Average,
    /// Conditional LATEs averaged under a counterfactual cell distribution.
    Counterfactual(Vec<f64>),
    /// Conditional LATEs restricted to cells with a nonnegative reduced form.
    Welfare,
    /// User-supplied instrument values per cell.
    Custom(Vec<f64>),
    /// Pooled Wald ratio ignoring the covariate.
    UnconditionalWald,
}

impl EstimandSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EstimandSpec::Cwlate => "cwlate",
            EstimandSpec::Average => "average",
            EstimandSpec::Counterfactual(_) => "counterfactual",
            EstimandSpec::Welfare => "welfare",
            EstimandSpec::Custom(_) => "custom",
            EstimandSpec::UnconditionalWald => "unconditional_wald",
        }
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for EstimandSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimandSpec::Counterfactual(v) | EstimandSpec::Custom(v) => {
                write!(f, "{}={}", self.name(), fmt_list(v))
            }
            _ => f.write_str(self.name()),
        }
    }
}

impl FromStr for EstimandSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = match s.split_once('=') {
            Some((n, p)) => (n.trim(), Some(p)),
            None => (s.trim(), None),
        };
        let parse_list = |p: Option<&str>| -> Result<Vec<f64>> {
            let p =
                p.ok_or_else(|| Error::InvalidArgument(format!("estimand `{name}` needs a comma-separated vector")))?;
            p.split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidArgument(format!("`{t}` is not a number in estimand `{name}`")))
                })
                .collect()
        };
        let spec = match name.to_ascii_lowercase().as_str() {
            "cwlate" | "cw" => EstimandSpec::Cwlate,
            "average" | "beta_a" => EstimandSpec::Average,
            "counterfactual" | "beta_c" => EstimandSpec::Counterfactual(parse_list(params)?),
            "welfare" | "beta_s" => EstimandSpec::Welfare,
            "custom" => EstimandSpec::Custom(parse_list(params)?),
            "unconditional_wald" | "wald" | "beta_u" => EstimandSpec::UnconditionalWald,
            other => return Err(Error::InvalidArgument(format!("unknown estimand `{other}`"))),
        };
        if params.is_some() && !matches!(spec, EstimandSpec::Counterfactual(_) | EstimandSpec::Custom(_)) {
            return Err(Error::InvalidArgument(format!("estimand `{name}` takes no parameters")));
        }
        Ok(spec)
    }
}

/// Aggregation weights `c` of an estimand and their derivative with respect
/// to `δ_X`, which is diagonal for every built-in estimand.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Instrument {
    pub c: Vec<f64>,
    pub g_diag: Vec<f64>,
}

fn require_cell(index: usize, delta_x: f64, zero_tol: f64) -> Result<()> {
    if delta_x.abs() > zero_tol {
        Ok(())
    } else {
        Err(Error::WeakCell { index, delta_x })
    }
}

pub(crate) fn instrument_for(d: &CellDiscontinuities, spec: &EstimandSpec, zero_tol: f64) -> Result<Instrument> {
    let m = d.m();
    let pi = d.pi_hat();
    let dx = &d.delta_x;
    let check_len = |v: &[f64], what: &str| {
        if v.len() == m {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("{what} has {} entries for {m} cells", v.len())))
        }
    };
    let inverse = |scale: &[f64], include: &dyn Fn(usize) -> bool| -> Result<Instrument> {
        let mut c = vec![0.0; m];
        let mut g = vec![0.0; m];
        for j in 0..m {
            if include(j) {
                require_cell(j, dx[j], zero_tol)?;
                c[j] = scale[j] / dx[j];
                g[j] = -scale[j] / (dx[j] * dx[j]);
            }
        }
        Ok(Instrument { c, g_diag: g })
    };

    match spec {
        EstimandSpec::Cwlate => {
            Ok(Instrument { c: pi.iter().zip(dx).map(|(p, x)| p * x).collect(), g_diag: pi.to_vec() })
        }
        EstimandSpec::Average => inverse(pi, &|_| true),
        EstimandSpec::Counterfactual(f) => {
            check_len(f, "counterfactual distribution")?;
            if f.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
                return Err(Error::InvalidArgument("counterfactual distribution must be nonnegative".into()));
            }
            let total: f64 = f.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("counterfactual distribution sums to {total}, not 1")));
            }
            inverse(f, &|j| f[j] > 0.0)
        }
        EstimandSpec::Welfare => inverse(pi, &|j| d.delta_y[j] >= 0.0),
        EstimandSpec::Custom(b) => {
            check_len(b, "instrument")?;
            for (j, (&bj, &xj)) in b.iter().zip(dx).enumerate() {
                if !bj.is_finite() {
                    return Err(Error::InvalidArgument(format!("instrument value {j} is not finite")));
                }
                if bj * xj < 0.0 {
                    return Err(Error::SignViolation { index: j });
                }
            }
            Ok(Instrument { c: pi.iter().zip(b).map(|(p, b)| p * b).collect(), g_diag: vec![0.0; m] })
        }
        EstimandSpec::UnconditionalWald => {
            if m != 1 {
                return Err(Error::InvalidArgument(
                    "the unconditional Wald ratio needs pooled single-cell discontinuities".into(),
                ));
            }
            Ok(Instrument { c: vec![1.0], g_diag: vec![0.0] })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WlateResult {
    pub estimand: String,
    pub beta_hat: f64,
    pub tau_y: f64,
    pub tau_x: f64,
    pub labels: Vec<String>,
    /// Share of the estimate attributed to each cell; sums to one.
    pub weights: Vec<f64>,
    /// Instrument value `b(w_j)` per cell.
    pub instrument: Vec<f64>,
    pub conditional_lates: Vec<Option<f64>>,
    pub dropped: Vec<String>,
    /// Cells whose reduced-form jump lies within one standard error of zero.
    pub flagged: Vec<String>,
}

pub fn wlate(d: &CellDiscontinuities, spec: &EstimandSpec) -> Result<WlateResult> {
    wlate_with_tol(d, spec, DEFAULT_ZERO_TOL)
}

pub fn wlate_with_tol(d: &CellDiscontinuities, spec: &EstimandSpec, zero_tol: f64) -> Result<WlateResult> {
    let inst = instrument_for(d, spec, zero_tol)?;
    let tau_x: f64 = inst.c.iter().zip(&d.delta_x).map(|(c, x)| c * x).sum();
    let tau_y: f64 = inst.c.iter().zip(&d.delta_y).map(|(c, y)| c * y).sum();
    match spec {
        EstimandSpec::Cwlate | EstimandSpec::UnconditionalWald if tau_x == 0.0 => return Err(Error::ZeroFirstStage),
        EstimandSpec::Cwlate | EstimandSpec::UnconditionalWald => {}
        _ if tau_x > 0.0 => {}
        _ => return Err(Error::DegenerateDenominator),
    }

    let flagged = match spec {
        EstimandSpec::Welfare => (0..d.m())
            .filter(|&j| d.delta_y[j].abs() < d.se_delta_y[j])
            .map(|j| d.partition.labels[j].clone())
            .collect(),
        _ => Vec::new(),
    };

    Ok(WlateResult {
        estimand: spec.to_string(),
        beta_hat: tau_y / tau_x,
        tau_y,
        tau_x,
        labels: d.partition.labels.clone(),
        weights: inst.c.iter().zip(&d.delta_x).map(|(c, x)| c * x / tau_x).collect(),
        instrument: inst.c.iter().zip(d.pi_hat()).map(|(c, p)| c / p).collect(),
        conditional_lates: conditional_lates(d, zero_tol),
        dropped: d.partition.dropped.clone(),
        flagged,
    })
}

pub fn cwlate(d: &CellDiscontinuities) -> Result<WlateResult> {
    wlate(d, &EstimandSpec::Cwlate)
}

/// `δ_Y/δ_X` per cell, `None` where the first stage is within `zero_tol` of zero.
pub fn conditional_lates(d: &CellDiscontinuities, zero_tol: f64) -> Vec<Option<f64>> {
    d.delta_y.iter().zip(&d.delta_x).map(|(&y, &x)| (x.abs() > zero_tol).then(|| y / x)).collect()
}

/// Pooled local polynomial Wald ratio.
pub fn unconditional_wald(data: &RddDataset, p: usize, h: f64, kernel: Kernel) -> Result<WlateResult> {
    let pooled = data.pooled();
    let partition = build_partition(&pooled, p + 1)?;
    let d = cell_discontinuities(&pooled, &partition, p, h, kernel)?;
    wlate(&d, &EstimandSpec::UnconditionalWald)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainsSign {
    Positive,
    Negative,
    Zero,
}

impl fmt::Display for GainsSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GainsSign::Positive => "positive",
            GainsSign::Negative => "negative",
            GainsSign::Zero => "zero",
        })
    }
}

/// Sign of `beta_cw - beta_u`, read as the direction of selection on gains.
pub fn selection_on_gains_sign(beta_cw: f64, beta_u: f64, tol: f64) -> GainsSign {
    let diff = beta_cw - beta_u;
    if diff.abs() <= tol {
        GainsSign::Zero
    } else if diff > 0.0 {
        GainsSign::Positive
    } else {
        GainsSign::Negative
    }
}
