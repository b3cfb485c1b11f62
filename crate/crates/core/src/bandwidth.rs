//! Plug-in MSE-optimal bandwidths for the local linear estimator with
//! quadratic bias correction.
//!
//! Three stages: a rule-of-thumb pilot `c_n`, a bias bandwidth `b_n` whose
//! own bias term comes from third-derivative fits at bandwidths `d_n`, and
//! the main bandwidth `h_n`. Variance constants are `n · bw^{1+2s} · Var`
//! for an estimator of a Taylor coefficient of order `s`.

use serde::{Deserialize, Serialize};

use crate::data::{build_partition, CellPartition, Kernel, RddDataset};
use crate::error::{Error, Result};
use crate::estimators::{wlate_with_tol, EstimandSpec, DEFAULT_ZERO_TOL};
use crate::inference::{linearization_coeffs_with_tol, LinearizationCoeffs, LocalFits};
use crate::localpoly::{
    cell_discontinuities_from_designs, component_covariance, Component, Residuals, Side, SideDesign, Variable,
};

/// `c_n = C_K · min(s, IQR/1.349) · n^{-1/5}`.
pub fn pilot_bandwidth(z: &[f64], kernel: Kernel) -> Result<f64> {
    let n = z.len();
    if n < 2 {
        return Err(Error::DegenerateSample);
    }
    let mean = z.iter().sum::<f64>() / n as f64;
    let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    if !(sd > 0.0) {
        return Err(Error::DegenerateSample);
    }
    let mut sorted = z.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.349) } else { sd };
    Ok(kernel.pilot_constant() * spread * (n as f64).powf(-0.2))
}

/// Linear interpolation between order statistics.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Minimiser of `bw^{2r} B² + V / (n bw^{2s+1})`, the MSE of an estimator of
/// a Taylor coefficient of order `s` whose bias is `bw^r B`:
/// `((2s+1) V / (2r B²))^{1/(2r+2s+1)} n^{-1/(2r+2s+1)}`.
pub fn optimal_bandwidth(v: f64, b: f64, n: usize, s: usize, r: usize) -> Option<f64> {
    let rate = 1.0 / (2 * r + 2 * s + 1) as f64;
    let c = (2 * s + 1) as f64 * v / (2.0 * r as f64 * b * b);
    let value = c.powf(rate) * (n as f64).powf(-rate);
    (value.is_finite() && value > 0.0).then_some(value)
}

/// Smallest and largest admissible bandwidth for fits needing `needed`
/// observations strictly inside the window in every cell and side.
pub fn bandwidth_bounds(data: &RddDataset, partition: &CellPartition, needed: usize) -> Result<(f64, f64)> {
    let m = partition.m();
    let mut dist: Vec<[Vec<f64>; 2]> = vec![[Vec::new(), Vec::new()]; m];
    let (mut zmin, mut zmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, &z) in data.z().iter().enumerate() {
        let Some(j) = partition.cell_of(i) else { continue };
        zmin = zmin.min(z);
        zmax = zmax.max(z);
        dist[j][usize::from(z < 0.0)].push(z.abs());
    }
    let mut lower: f64 = 0.0;
    for (j, sides) in dist.iter_mut().enumerate() {
        for (s, d) in sides.iter_mut().enumerate() {
            if d.len() < needed {
                return Err(Error::InsufficientSupport {
                    cell: partition.labels[j].clone(),
                    side: Side::BOTH[s],
                    order: needed.saturating_sub(1),
                    available: d.len(),
                    needed,
                });
            }
            d.sort_by(f64::total_cmp);
            let kth = d[needed - 1];
            let next = d.get(needed).copied().filter(|&v| v > kth);
            lower = lower.max(next.map_or(kth * (1.0 + 1e-9), |v| 0.5 * (kth + v)));
        }
    }
    Ok((lower, (zmax - zmin).max(lower)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthOptions {
    pub kernel: Kernel,
    pub min_side_count: usize,
    pub zero_tol: f64,
}

impl Default for BandwidthOptions {
    fn default() -> Self {
        Self { kernel: Kernel::Triangular, min_side_count: 5, zero_tol: DEFAULT_ZERO_TOL }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeBandwidth {
    pub variable: Variable,
    pub side: Side,
    pub d: f64,
    pub v: f64,
    pub b: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasBandwidth {
    pub b_n: f64,
    pub d_n: Vec<DerivativeBandwidth>,
    pub v_bc: f64,
    pub b_bc: f64,
    pub zero_bias: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MainBandwidth {
    pub h_n: f64,
    pub v: f64,
    pub b: f64,
    pub zero_bias: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthReport {
    pub estimand: String,
    pub kernel: Kernel,
    pub n: usize,
    pub c_n: f64,
    pub b_n: f64,
    pub h_n: f64,
    pub d_n: Vec<DerivativeBandwidth>,
    pub v_bc: f64,
    pub b_bc: f64,
    pub v_main: f64,
    pub b_main: f64,
    pub zero_bias_b: bool,
    pub zero_bias_h: bool,
    pub lower: f64,
    pub upper: f64,
}

fn clamp_or_upper(value: Option<f64>, lower: f64, upper: f64) -> (f64, bool) {
    match value {
        Some(v) => (v.clamp(lower, upper), false),
        None => (upper, true),
    }
}

fn weighted_variance(residuals: &Residuals, design: &SideDesign, s: usize, weights: &[(f64, f64)]) -> f64 {
    let comps = [Component { design, s, variable: Variable::Y }, Component { design, s, variable: Variable::X }];
    component_covariance(residuals, &comps)
        .iter()
        .zip(weights)
        .map(|(cov, &(wy, wx))| wy * wy * cov[(0, 0)] + 2.0 * wy * wx * cov[(0, 1)] + wx * wx * cov[(1, 1)])
        .sum()
}

/// Step two: the bias bandwidth and the four derivative bandwidths it uses.
pub fn bias_bandwidth(
    data: &RddDataset,
    partition: &CellPartition,
    coeffs: &LinearizationCoeffs,
    c_n: f64,
    kernel: Kernel,
) -> Result<BiasBandwidth> {
    bias_bandwidth_bounded(data, partition, coeffs, c_n, kernel, 5)
}

fn bias_bandwidth_bounded(
    data: &RddDataset,
    partition: &CellPartition,
    coeffs: &LinearizationCoeffs,
    c_n: f64,
    kernel: Kernel,
    min_side_count: usize,
) -> Result<BiasBandwidth> {
    let n = partition.n();
    let m = partition.m();
    let design = |side, order, bw| SideDesign::new(data, partition, side, order, bw, kernel);
    let d1 = [design(Side::Plus, 1, c_n)?, design(Side::Minus, 1, c_n)?];
    let d2 = [design(Side::Plus, 2, c_n)?, design(Side::Minus, 2, c_n)?];
    let d3 = [design(Side::Plus, 3, c_n)?, design(Side::Minus, 3, c_n)?];
    let d4 = [design(Side::Plus, 4, c_n)?, design(Side::Minus, 4, c_n)?];
    let (lo3, up) = bandwidth_bounds(data, partition, min_side_count.max(4))?;
    let residuals = cell_discontinuities_from_designs(data, partition, &d1[0], &d1[1])?.residuals(data);
    let b12 = [d1[0].bias_constants(0, 2), d1[1].bias_constants(0, 2)];
    let b223 = [d2[0].bias_constants(2, 3), d2[1].bias_constants(2, 3)];
    let b334 = [d3[0].bias_constants(3, 4), d3[1].bias_constants(3, 4)];

    let mut var_bc = 0.0;
    for s in 0..2 {
        let w: Vec<(f64, f64)> = (0..m).map(|j| (b12[s][j] * coeffs.c1[j], b12[s][j] * coeffs.c2[j])).collect();
        var_bc += weighted_variance(&residuals, &d2[s], 2, &w);
    }
    let v_bc = n as f64 * c_n.powi(5) * var_bc;

    let mut d_n = Vec::with_capacity(4);
    let mut third = [[vec![0.0; m], vec![0.0; m]], [vec![0.0; m], vec![0.0; m]]];
    for (vi, variable) in [Variable::Y, Variable::X].into_iter().enumerate() {
        let cv = if vi == 0 { &coeffs.c1 } else { &coeffs.c2 };
        for s in 0..2 {
            let a: Vec<f64> = (0..m).map(|j| cv[j] * b223[s][j] * b12[s][j]).collect();
            let w: Vec<(f64, f64)> = match variable {
                Variable::Y => a.iter().map(|&a| (6.0 * a, 0.0)).collect(),
                Variable::X => a.iter().map(|&a| (0.0, 6.0 * a)).collect(),
            };
            let v = n as f64 * c_n.powi(7) * weighted_variance(&residuals, &d3[s], 3, &w);
            let quartic = d4[s].fit(data, variable).taylor(4);
            let b: f64 = (0..m).map(|j| a[j] * quartic[j] * b334[s][j]).sum();
            let (d, clamped) = clamp_or_upper(optimal_bandwidth(v, b, n, 3, 1), lo3, up);
            third[vi][s] = design(Side::BOTH[s], 3, d)?.fit(data, variable).taylor(3);
            d_n.push(DerivativeBandwidth { variable, side: Side::BOTH[s], d, v, b, clamped });
        }
    }

    let mut b_bc = 0.0;
    for (s, side) in Side::BOTH.iter().enumerate() {
        for j in 0..m {
            b_bc += side.sign() * b12[s][j] * b223[s][j] / 2.0
                * (coeffs.c1[j] * third[0][s][j] + coeffs.c2[j] * third[1][s][j]);
        }
    }
    let (lo2, up) = bandwidth_bounds(data, partition, min_side_count.max(3))?;
    let (b_n, zero_bias) = clamp_or_upper(optimal_bandwidth(v_bc, b_bc, n, 2, 1), lo2, up);
    Ok(BiasBandwidth { b_n, d_n, v_bc, b_bc, zero_bias })
}

/// Step three: the main bandwidth given the pilot and bias bandwidths.
pub fn main_bandwidth(
    data: &RddDataset,
    partition: &CellPartition,
    coeffs: &LinearizationCoeffs,
    c_n: f64,
    b_n: f64,
    kernel: Kernel,
) -> Result<MainBandwidth> {
    main_bandwidth_bounded(data, partition, coeffs, c_n, b_n, kernel, 5)
}

fn main_bandwidth_bounded(
    data: &RddDataset,
    partition: &CellPartition,
    coeffs: &LinearizationCoeffs,
    c_n: f64,
    b_n: f64,
    kernel: Kernel,
    min_side_count: usize,
) -> Result<MainBandwidth> {
    let n = partition.n();
    let fits = LocalFits::new(data, partition, 1, 2, c_n, b_n, kernel)?;
    let var: f64 = (0..2)
        .map(|s| {
            let w: Vec<(f64, f64)> = coeffs.c1.iter().zip(&coeffs.c2).map(|(&a, &b)| (a, b)).collect();
            weighted_variance(&fits.residuals, &fits.main[s], 0, &w)
        })
        .sum();
    let v = n as f64 * c_n * var;
    let b = fits.bias(coeffs);
    let (lo, up) = bandwidth_bounds(data, partition, min_side_count.max(2))?;
    let (h_n, zero_bias) = clamp_or_upper(optimal_bandwidth(v, b, n, 0, 2), lo, up);
    Ok(MainBandwidth { h_n, v, b, zero_bias })
}

/// Runs all three stages for the estimand `spec`.
pub fn select_bandwidths(data: &RddDataset, spec: &EstimandSpec, opts: &BandwidthOptions) -> Result<BandwidthReport> {
    let pooled;
    let mut sample = data;
    if matches!(spec, EstimandSpec::UnconditionalWald) {
        pooled = data.pooled();
        sample = &pooled;
    }
    let partition = build_partition(sample, opts.min_side_count.max(5))?;
    let z: Vec<f64> = (0..sample.len()).filter(|&i| partition.cell_of(i).is_some()).map(|i| sample.z()[i]).collect();
    let (lo, up) = bandwidth_bounds(sample, &partition, opts.min_side_count.max(5))?;
    let c_n = pilot_bandwidth(&z, opts.kernel)?.clamp(lo, up);

    let d1 = [
        SideDesign::new(sample, &partition, Side::Plus, 1, c_n, opts.kernel)?,
        SideDesign::new(sample, &partition, Side::Minus, 1, c_n, opts.kernel)?,
    ];
    let disc = cell_discontinuities_from_designs(sample, &partition, &d1[0], &d1[1])?;
    let prelim = wlate_with_tol(&disc, spec, opts.zero_tol)?;
    let coeffs = linearization_coeffs_with_tol(&disc, spec, prelim.beta_hat, opts.zero_tol)?;

    let bias = bias_bandwidth_bounded(sample, &partition, &coeffs, c_n, opts.kernel, opts.min_side_count)?;
    let main = main_bandwidth_bounded(sample, &partition, &coeffs, c_n, bias.b_n, opts.kernel, opts.min_side_count)?;
    Ok(BandwidthReport {
        estimand: spec.to_string(),
        kernel: opts.kernel,
        n: partition.n(),
        c_n,
        b_n: bias.b_n,
        h_n: main.h_n,
        d_n: bias.d_n,
        v_bc: bias.v_bc,
        b_bc: bias.b_bc,
        v_main: main.v,
        b_main: main.b,
        zero_bias_b: bias.zero_bias,
        zero_bias_h: main.zero_bias,
        lower: lo,
        upper: up,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn optimal_bandwidth_minimises_mse() {
        let (v, b, n) = (3.0, 1.5, 1000);
        for (s, r) in [(0, 2), (2, 1), (3, 1)] {
            let h = optimal_bandwidth(v, b, n, s, r).unwrap();
            let mse = |h: f64| h.powi(2 * r as i32) * b * b + v / (n as f64 * h.powi(2 * s as i32 + 1));
            assert!(mse(h) < mse(h * 1.01) && mse(h) < mse(h * 0.99));
        }
        assert_eq!(optimal_bandwidth(1.0, 0.0, 100, 0, 2), None);
    }

    #[test]
    fn optimal_rates() {
        let ratio =
            |s, r| optimal_bandwidth(1.0, 1.0, 2000, s, r).unwrap() / optimal_bandwidth(1.0, 1.0, 1000, s, r).unwrap();
        assert_relative_eq!(ratio(0, 2), 2f64.powf(-0.2), max_relative = 1e-12);
        assert_relative_eq!(ratio(2, 1), 2f64.powf(-1.0 / 7.0), max_relative = 1e-12);
        assert_relative_eq!(ratio(3, 1), 2f64.powf(-1.0 / 9.0), max_relative = 1e-12);
    }

    #[test]
    fn pilot_uses_smaller_spread() {
        let z = [-3.0, -0.1, 0.0, 0.1, 3.0];
        let sd = (18.02f64 / 4.0).sqrt();
        let iqr = 0.2 / 1.349;
        assert!(iqr < sd);
        assert_relative_eq!(
            pilot_bandwidth(&z, Kernel::Uniform).unwrap(),
            1.843 * iqr * 5f64.powf(-0.2),
            max_relative = 1e-12
        );
        let flat = [0.0, 0.0, 0.0, 0.0, 1.0];
        let sd = (0.8f64 / 4.0).sqrt();
        assert_relative_eq!(pilot_bandwidth(&flat, Kernel::Triangular).unwrap(), 2.576 * sd * 5f64.powf(-0.2));
        assert_eq!(pilot_bandwidth(&[1.0, 1.0], Kernel::Uniform).unwrap_err(), Error::DegenerateSample);
    }

    #[test]
    fn bounds_cover_needed_points() {
        let z: Vec<f64> = (1..=10).flat_map(|k| [k as f64, -(k as f64)]).collect();
        let n = z.len();
        let data = RddDataset::new(vec![0.0; n], vec![0.0; n], z, vec!["a".into(); n], 0.0).unwrap();
        let part = build_partition(&data, 3).unwrap();
        let (lo, up) = bandwidth_bounds(&data, &part, 3).unwrap();
        assert_relative_eq!(lo, 3.5);
        assert_relative_eq!(up, 20.0);
    }
}
