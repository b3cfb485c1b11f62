//! Delta-method linearization, bias correction and robust bias-corrected
//! variance for weighted LATE estimators.

use serde::{Deserialize, Serialize};

use crate::data::{build_partition, CellPartition, Kernel, RddDataset};
use crate::error::{Error, Result};
use crate::estimators::{instrument_for, wlate_with_tol, EstimandSpec, WlateResult, DEFAULT_ZERO_TOL};
use crate::localpoly::{
    cell_discontinuities_from_designs, component_covariance, CellDiscontinuities, Component, Residuals, Side,
    SideDesign, Variable,
};
use crate::normal;

const EXACT_FIT_SE: f64 = 1e-12;

/// First-order expansion of `β̂` in the per-cell discontinuities:
/// `β̂ - β ≈ c1'(δ̂_Y - δ_Y) + c2'(δ̂_X - δ_X)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizationCoeffs {
    pub c: Vec<f64>,
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    /// Diagonal of the derivative of `c` with respect to `δ_X`.
    pub g_delta: Vec<f64>,
    pub tau_x: f64,
    pub tau_y: f64,
    pub beta: f64,
}

pub fn linearization_coeffs(
    d: &CellDiscontinuities,
    spec: &EstimandSpec,
    beta_hat: f64,
) -> Result<LinearizationCoeffs> {
    linearization_coeffs_with_tol(d, spec, beta_hat, DEFAULT_ZERO_TOL)
}

pub fn linearization_coeffs_with_tol(
    d: &CellDiscontinuities,
    spec: &EstimandSpec,
    beta_hat: f64,
    zero_tol: f64,
) -> Result<LinearizationCoeffs> {
    let inst = instrument_for(d, spec, zero_tol)?;
    let tau_x: f64 = inst.c.iter().zip(&d.delta_x).map(|(c, x)| c * x).sum();
    let tau_y: f64 = inst.c.iter().zip(&d.delta_y).map(|(c, y)| c * y).sum();
    if tau_x == 0.0 {
        return Err(Error::ZeroFirstStage);
    }
    let c1 = inst.c.iter().map(|c| c / tau_x).collect();
    let c2 = (0..d.m())
        .map(|j| {
            let g = inst.g_diag[j];
            (d.delta_y[j] * g - beta_hat * (inst.c[j] + d.delta_x[j] * g)) / tau_x
        })
        .collect();
    Ok(LinearizationCoeffs { c: inst.c, c1, c2, g_delta: inst.g_diag, tau_x, tau_y, beta: beta_hat })
}

/// Designs, fits and residuals shared by the bias and variance computations
/// at a main bandwidth `h` (order `p`) and a bias bandwidth `b` (order `q`).
pub(crate) struct LocalFits {
    pub p: usize,
    pub h: f64,
    pub main: [SideDesign; 2],
    pub pilot: [SideDesign; 2],
    pub disc: CellDiscontinuities,
    pub residuals: Residuals,
    /// Taylor coefficient `p+1` of the order-`q` fits, indexed `[side][cell]`.
    pub curvature_y: [Vec<f64>; 2],
    pub curvature_x: [Vec<f64>; 2],
    /// `𝓑_{p,p+1}` at `h`, indexed `[side][cell]`.
    pub bias_const: [Vec<f64>; 2],
}

impl LocalFits {
    pub fn new(
        data: &RddDataset,
        partition: &CellPartition,
        p: usize,
        q: usize,
        h: f64,
        b: f64,
        kernel: Kernel,
    ) -> Result<Self> {
        if q <= p {
            return Err(Error::InvalidArgument(format!("bias order {q} must exceed main order {p}")));
        }
        let design = |side, order, bw| SideDesign::new(data, partition, side, order, bw, kernel);
        let main = [design(Side::Plus, p, h)?, design(Side::Minus, p, h)?];
        let pilot = [design(Side::Plus, q, b)?, design(Side::Minus, q, b)?];
        let disc = cell_discontinuities_from_designs(data, partition, &main[0], &main[1])?;
        let residuals = disc.residuals(data);
        let curv = |v: Variable| -> [Vec<f64>; 2] { [0, 1].map(|s| pilot[s].fit(data, v).taylor(p + 1)) };
        let curvature_y = curv(Variable::Y);
        let curvature_x = curv(Variable::X);
        let bias_const = [0, 1].map(|s| main[s].bias_constants(0, p + 1));
        Ok(Self { p, h, main, pilot, disc, residuals, curvature_y, curvature_x, bias_const })
    }

    /// `B̂ = c1'B̂_Y + c2'B̂_X`.
    pub fn bias(&self, coeffs: &LinearizationCoeffs) -> f64 {
        let mut total = 0.0;
        for (s, side) in Side::BOTH.iter().enumerate() {
            for j in 0..self.disc.m() {
                total += side.sign()
                    * self.bias_const[s][j]
                    * (coeffs.c1[j] * self.curvature_y[s][j] + coeffs.c2[j] * self.curvature_x[s][j]);
            }
        }
        total
    }

    /// Conventional and robust bias-corrected variances of `β̂` and `β̂^{bc}`.
    pub fn variances(&self, coeffs: &LinearizationCoeffs) -> (f64, f64) {
        let scale = self.h.powi(self.p as i32 + 1);
        let mut conventional = 0.0;
        let mut robust = 0.0;
        for s in 0..2 {
            let comps = [
                Component { design: &self.main[s], s: 0, variable: Variable::Y },
                Component { design: &self.main[s], s: 0, variable: Variable::X },
                Component { design: &self.pilot[s], s: self.p + 1, variable: Variable::Y },
                Component { design: &self.pilot[s], s: self.p + 1, variable: Variable::X },
            ];
            let covs = component_covariance(&self.residuals, &comps);
            for (j, cov) in covs.iter().enumerate() {
                let bc = scale * self.bias_const[s][j];
                let w = [coeffs.c1[j], coeffs.c2[j], -bc * coeffs.c1[j], -bc * coeffs.c2[j]];
                for a in 0..4 {
                    for b in 0..4 {
                        let term = w[a] * cov[(a, b)] * w[b];
                        robust += term;
                        if a < 2 && b < 2 {
                            conventional += term;
                        }
                    }
                }
            }
        }
        (conventional, robust)
    }
}

/// `B̂_{ω,1,2}(h, b)` for a local linear estimator with quadratic bias fits.
pub fn bias_estimate(
    data: &RddDataset,
    partition: &CellPartition,
    coeffs: &LinearizationCoeffs,
    h: f64,
    b: f64,
    kernel: Kernel,
) -> Result<f64> {
    Ok(LocalFits::new(data, partition, 1, 2, h, b, kernel)?.bias(coeffs))
}

/// `(var_conventional, var_rbc)` for a local linear estimator with quadratic
/// bias fits.
pub fn rbc_variance(
    data: &RddDataset,
    partition: &CellPartition,
    coeffs: &LinearizationCoeffs,
    h: f64,
    b: f64,
    kernel: Kernel,
) -> Result<(f64, f64)> {
    let (conv, rbc) = LocalFits::new(data, partition, 1, 2, h, b, kernel)?.variances(coeffs);
    if !(rbc > (EXACT_FIT_SE * coeffs.beta.abs().max(1.0)).powi(2)) {
        return Err(Error::NonPositiveVariance { value: rbc });
    }
    Ok((conv, rbc))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbcEstimate {
    pub beta_hat: f64,
    pub beta_bc: f64,
    pub bias_hat: f64,
    pub var_conventional: f64,
    pub var_rbc: f64,
    pub se_rbc: f64,
    pub h: f64,
    pub b: f64,
    pub level: f64,
    pub ci: (f64, f64),
    /// Plug-in size of the neglected second-order term of the expansion.
    /// Large values point to a weak first stage.
    pub remainder_proxy: f64,
}

impl RbcEstimate {
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        beta_hat: f64,
        bias_hat: f64,
        var_conventional: f64,
        var_rbc: f64,
        h: f64,
        b: f64,
        p: usize,
        level: f64,
    ) -> Result<Self> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidArgument(format!("confidence level {level} is outside (0, 1)")));
        }
        // Variances at rounding level mean the data are fit exactly.
        let floor = (EXACT_FIT_SE * beta_hat.abs().max(1.0)).powi(2);
        if !(var_rbc > floor) {
            return Err(Error::NonPositiveVariance { value: var_rbc });
        }
        let beta_bc = beta_hat - h.powi(p as i32 + 1) * bias_hat;
        let se_rbc = var_rbc.sqrt();
        let half = normal::critical_value(level) * se_rbc;
        Ok(Self {
            beta_hat,
            beta_bc,
            bias_hat,
            var_conventional,
            var_rbc,
            se_rbc,
            h,
            b,
            level,
            ci: (beta_bc - half, beta_bc + half),
            remainder_proxy: 0.0,
        })
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci.0 <= value && value <= self.ci.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub p: usize,
    pub q: usize,
    pub level: f64,
    pub kernel: Kernel,
    pub min_side_count: usize,
    pub zero_tol: f64,
    /// Restrict the sample, and hence `π̂`, to `|z| <= h` before estimating.
    pub within_bandwidth: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            p: 1,
            q: 2,
            level: 0.95,
            kernel: Kernel::Triangular,
            min_side_count: 5,
            zero_tol: DEFAULT_ZERO_TOL,
            within_bandwidth: false,
        }
    }
}

fn quadratic_remainder(fits: &LocalFits, coeffs: &LinearizationCoeffs, var_conventional: f64) -> f64 {
    let d = &fits.disc;
    let var_tau_x: f64 =
        (0..d.m()).map(|j| ((coeffs.c[j] + d.delta_x[j] * coeffs.g_delta[j]) * d.se_delta_x[j]).powi(2)).sum();
    var_tau_x.sqrt() * var_conventional.sqrt() / coeffs.tau_x.abs()
}

/// Debiased estimate and robust confidence interval on an already built partition.
pub fn rbc_estimate(
    data: &RddDataset,
    partition: &CellPartition,
    spec: &EstimandSpec,
    h: f64,
    b: f64,
    level: f64,
    kernel: Kernel,
) -> Result<RbcEstimate> {
    let opts = EstimateOptions { level, kernel, ..EstimateOptions::default() };
    Ok(estimate_on_partition(data, partition, spec, h, b, &opts)?.1)
}

fn estimate_on_partition(
    data: &RddDataset,
    partition: &CellPartition,
    spec: &EstimandSpec,
    h: f64,
    b: f64,
    opts: &EstimateOptions,
) -> Result<(WlateResult, RbcEstimate, CellDiscontinuities)> {
    let fits = LocalFits::new(data, partition, opts.p, opts.q, h, b, opts.kernel)?;
    let wl = wlate_with_tol(&fits.disc, spec, opts.zero_tol)?;
    let coeffs = linearization_coeffs_with_tol(&fits.disc, spec, wl.beta_hat, opts.zero_tol)?;
    let bias = fits.bias(&coeffs);
    let (conv, rbc) = fits.variances(&coeffs);
    let mut est = RbcEstimate::from_parts(wl.beta_hat, bias, conv, rbc, h, b, opts.p, opts.level)?;
    est.remainder_proxy = quadratic_remainder(&fits, &coeffs, conv);
    Ok((wl, est, fits.disc))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub label: String,
    pub pi_hat: f64,
    pub n_left: usize,
    pub n_right: usize,
    pub delta_y: f64,
    pub delta_x: f64,
    pub se_delta_y: f64,
    pub se_delta_x: f64,
    pub conditional_late: Option<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimand: String,
    pub n: usize,
    pub n_used: usize,
    pub kernel: Kernel,
    pub wlate: WlateResult,
    pub rbc: RbcEstimate,
    pub cells: Vec<CellSummary>,
    pub dropped: Vec<String>,
}

/// Full estimation run: optional restriction to the bandwidth window,
/// partitioning, point estimate, bias correction and robust interval.
pub fn estimate(
    data: &RddDataset,
    spec: &EstimandSpec,
    h: f64,
    b: f64,
    opts: &EstimateOptions,
) -> Result<EstimateReport> {
    let restricted;
    let mut sample = data;
    if opts.within_bandwidth {
        restricted = data.within(h)?;
        sample = &restricted;
    }
    let pooled;
    if matches!(spec, EstimandSpec::UnconditionalWald) {
        pooled = sample.pooled();
        sample = &pooled;
    }
    let partition = build_partition(sample, opts.min_side_count.max(opts.q + 1))?;
    let (wl, rbc, disc) = estimate_on_partition(sample, &partition, spec, h, b, opts)?;
    let cells = (0..disc.m())
        .map(|j| CellSummary {
            label: partition.labels[j].clone(),
            pi_hat: partition.pi_hat[j],
            n_left: partition.n_left[j],
            n_right: partition.n_right[j],
            delta_y: disc.delta_y[j],
            delta_x: disc.delta_x[j],
            se_delta_y: disc.se_delta_y[j],
            se_delta_x: disc.se_delta_x[j],
            conditional_late: wl.conditional_lates[j],
            weight: wl.weights[j],
        })
        .collect();
    Ok(EstimateReport {
        estimand: spec.to_string(),
        n: data.len(),
        n_used: partition.n(),
        kernel: opts.kernel,
        dropped: partition.dropped.clone(),
        wlate: wl,
        rbc,
        cells,
    })
}
