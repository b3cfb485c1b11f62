//! Monte Carlo engine for a fuzzy design with heterogeneous compliance and
//! effects across a discrete covariate.
//!
//! ```text
//! D = 1{Z >= 0}
//! X = 1{-1 + 0.2 Z + 0.1 D Z + 1.2 D + α D W + U_X > 0}
//! Y = 1 + 2 X + 0.3 Z - 0.1 X Z + β X W + U_Y
//! ```
//!
//! with `Var(U_X) = 1`, `Var(U_Y) = 2`, `Cov(U_X, U_Y) = 0.5`, `Z` centred
//! normal and `W` uniform on a symmetric grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::{select_bandwidths, BandwidthOptions};
use crate::data::{Kernel, RddDataset};
use crate::error::{Error, Result};
use crate::estimators::{wlate, EstimandSpec};
use crate::inference::{estimate, EstimateOptions};
use crate::localpoly::CellDiscontinuities;
use crate::normal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum BandwidthMode {
    Fixed {
        h: f64,
        b: f64,
    },
    /// Plug-in selection each replication; `shared` selects once for the
    /// pooled Wald ratio and reuses the result for every estimand.
    Auto {
        shared: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WSupport {
    /// `W ∈ {-1, 1}`.
    #[default]
    Binary,
    /// `W ∈ {±1/3, ±2/3, ±1, ±4/3, ±5/3}`.
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    #[default]
    OwnEstimand,
    UnconditionalLate,
}

/// How the second parameter of the running-variable distribution is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ZScale {
    #[default]
    StdDev,
    Variance,
}

fn default_estimands() -> Vec<EstimandSpec> {
    vec![EstimandSpec::Cwlate, EstimandSpec::UnconditionalWald]
}
fn default_bandwidth() -> BandwidthMode {
    BandwidthMode::Auto { shared: true }
}
fn default_level() -> f64 {
    0.95
}
fn default_min_side() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub alpha_dw: f64,
    pub beta_xw: f64,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    #[serde(default = "default_estimands")]
    pub estimands: Vec<EstimandSpec>,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: BandwidthMode,
    /// Restrict each sample to `|z| <= h` before estimating.
    #[serde(default)]
    pub within_bandwidth: bool,
    #[serde(default)]
    pub w_support: WSupport,
    /// Replace `W` by its sign before estimation.
    #[serde(default)]
    pub coarsen: bool,
    #[serde(default)]
    pub target: Target,
    #[serde(default)]
    pub z_scale: ZScale,
    #[serde(default)]
    pub kernel: Kernel,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_min_side")]
    pub min_side_count: usize,
    /// Worker threads; all available cores when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl McConfig {
    pub fn new(alpha_dw: f64, beta_xw: f64, n: usize, reps: usize, seed: u64) -> Self {
        Self {
            alpha_dw,
            beta_xw,
            n,
            reps,
            seed,
            estimands: default_estimands(),
            bandwidth: default_bandwidth(),
            within_bandwidth: false,
            w_support: WSupport::Binary,
            coarsen: false,
            target: Target::OwnEstimand,
            z_scale: ZScale::StdDev,
            kernel: Kernel::Triangular,
            level: default_level(),
            min_side_count: default_min_side(),
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 50 {
            return Err(Error::InvalidArgument(format!("n = {} is below the minimum of 50", self.n)));
        }
        if self.reps == 0 {
            return Err(Error::InvalidArgument("reps must be positive".into()));
        }
        if self.estimands.is_empty() {
            return Err(Error::InvalidArgument("no estimands requested".into()));
        }
        if let BandwidthMode::Fixed { h, b } = self.bandwidth {
            if !(h > 0.0 && b > 0.0 && h.is_finite() && b.is_finite()) {
                return Err(Error::InvalidArgument("fixed bandwidths must be positive".into()));
            }
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidArgument(format!("level {} is outside (0, 1)", self.level)));
        }
        Ok(())
    }

    fn z_sd(&self) -> f64 {
        match self.z_scale {
            ZScale::StdDev => 2.0,
            ZScale::Variance => 2f64.sqrt(),
        }
    }
}

/// Support points of `W` with their labels.
pub fn w_support(support: WSupport) -> Vec<(f64, String)> {
    match support {
        WSupport::Binary => vec![(-1.0, "-1".into()), (1.0, "1".into())],
        WSupport::Grid => (-5..=5).filter(|&k| k != 0).map(|k| (k as f64 / 3.0, format!("{k}/3"))).collect(),
    }
}

fn coarse_label(w: f64) -> &'static str {
    if w < 0.0 {
        "neg"
    } else {
        "pos"
    }
}

/// Treatment and outcome for one draw.
pub fn dgp_outcome(alpha_dw: f64, beta_xw: f64, z: f64, w: f64, u_x: f64, u_y: f64) -> (f64, f64) {
    let d = if z >= 0.0 { 1.0 } else { 0.0 };
    let index = -1.0 + 0.2 * z + 0.1 * d * z + 1.2 * d + alpha_dw * d * w + u_x;
    let x = if index > 0.0 { 1.0 } else { 0.0 };
    let y = 1.0 + 2.0 * x + 0.3 * z - 0.1 * x * z + beta_xw * x * w + u_y;
    (x, y)
}

/// Replication `rep_index` of the design; each replication has its own
/// random stream, so draws do not depend on scheduling.
pub fn dgp_sample(cfg: &McConfig, rep_index: u64) -> RddDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(rep_index);
    let support = w_support(cfg.w_support);
    let sd = cfg.z_sd();
    let rho_scale = 1.75f64.sqrt();

    let mut y = Vec::with_capacity(cfg.n);
    let mut x = Vec::with_capacity(cfg.n);
    let mut z = Vec::with_capacity(cfg.n);
    let mut cell = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let k = rng.gen_range(0..support.len());
        let zi = sd * rng.sample::<f64, _>(StandardNormal);
        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        let (xi, yi) = dgp_outcome(cfg.alpha_dw, cfg.beta_xw, zi, support[k].0, e1, 0.5 * e1 + rho_scale * e2);
        y.push(yi);
        x.push(xi);
        z.push(zi);
        cell.push(k);
    }
    let labels = support.into_iter().map(|(_, l)| l).collect();
    let data = RddDataset::from_indexed(y, x, z, cell, labels, 0.0).expect("simulated data are valid");
    if cfg.coarsen {
        let grid = w_support(cfg.w_support);
        data.relabel(|l| {
            let w = grid.iter().find(|(_, g)| g == l).map(|(w, _)| *w).unwrap_or(0.0);
            coarse_label(w).to_string()
        })
    } else {
        data
    }
}

/// Population quantities at the cutoff for the cells used in estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueEstimands {
    pub labels: Vec<String>,
    pub pi: Vec<f64>,
    pub delta_x: Vec<f64>,
    pub delta_y: Vec<f64>,
    /// `δ_Y / δ_X` per cell.
    pub beta: Vec<f64>,
    pub beta_u: f64,
    pub beta_cw: f64,
}

impl TrueEstimands {
    /// Population value of `spec` on these cells.
    pub fn value(&self, spec: &EstimandSpec) -> Result<f64> {
        if matches!(spec, EstimandSpec::UnconditionalWald) {
            return Ok(self.beta_u);
        }
        let d = CellDiscontinuities::from_parts(self.delta_y.clone(), self.delta_x.clone(), self.pi.clone())?;
        Ok(wlate(&d, spec)?.beta_hat)
    }
}

/// Analytic cell discontinuities on the full support of `W`.
pub fn true_estimands(alpha_dw: f64, beta_xw: f64) -> TrueEstimands {
    true_estimands_for(alpha_dw, beta_xw, WSupport::Binary, false)
}

pub fn true_estimands_for(alpha_dw: f64, beta_xw: f64, support: WSupport, coarsen: bool) -> TrueEstimands {
    let grid = w_support(support);
    let base = normal::cdf(-1.0);
    let dx: Vec<f64> = grid.iter().map(|(w, _)| normal::cdf(0.2 + alpha_dw * w) - base).collect();
    let dy: Vec<f64> = grid.iter().zip(&dx).map(|((w, _), x)| (2.0 + beta_xw * w) * x).collect();
    let share = 1.0 / grid.len() as f64;

    let (labels, pi, delta_x, delta_y) = if coarsen {
        let mut out = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for label in ["neg", "pos"] {
            let members: Vec<usize> = (0..grid.len()).filter(|&k| coarse_label(grid[k].0) == label).collect();
            let k = members.len() as f64;
            out.0.push(label.to_string());
            out.1.push(k * share);
            out.2.push(members.iter().map(|&i| dx[i]).sum::<f64>() / k);
            out.3.push(members.iter().map(|&i| dy[i]).sum::<f64>() / k);
        }
        out
    } else {
        (grid.into_iter().map(|(_, l)| l).collect(), vec![share; dx.len()], dx, dy)
    };

    let sum = |f: &dyn Fn(usize) -> f64| (0..pi.len()).map(f).sum::<f64>();
    let beta_u = sum(&|j| pi[j] * delta_y[j]) / sum(&|j| pi[j] * delta_x[j]);
    let beta_cw = sum(&|j| pi[j] * delta_x[j] * delta_y[j]) / sum(&|j| pi[j] * delta_x[j] * delta_x[j]);
    let beta = delta_y.iter().zip(&delta_x).map(|(y, x)| y / x).collect();
    TrueEstimands { labels, pi, delta_x, delta_y, beta, beta_u, beta_cw }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub estimand: String,
    pub target: f64,
    pub mean: f64,
    pub bias: f64,
    pub bias_sq: f64,
    pub variance: f64,
    pub mse: f64,
    /// MSE of the bias-corrected estimate.
    pub mse_bc: f64,
    pub coverage: f64,
    pub mean_h: f64,
    pub mean_b: f64,
    pub successes: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub config: McConfig,
    pub truth: TrueEstimands,
    pub rows: Vec<McRow>,
}

impl McReport {
    pub fn row(&self, estimand: &EstimandSpec) -> Option<&McRow> {
        let name = estimand.to_string();
        self.rows.iter().find(|r| r.estimand == name)
    }
}

#[derive(Debug, Clone, Copy)]
struct Draw {
    beta_hat: f64,
    beta_bc: f64,
    covered: bool,
    h: f64,
    b: f64,
}

fn replicate(cfg: &McConfig, rep: u64, targets: &[f64]) -> Vec<Option<Draw>> {
    let data = dgp_sample(cfg, rep);
    let bw_opts = BandwidthOptions { kernel: cfg.kernel, min_side_count: cfg.min_side_count, ..Default::default() };
    let opts = EstimateOptions {
        level: cfg.level,
        kernel: cfg.kernel,
        min_side_count: cfg.min_side_count,
        within_bandwidth: cfg.within_bandwidth,
        ..EstimateOptions::default()
    };
    let shared = match cfg.bandwidth {
        BandwidthMode::Fixed { h, b } => Some(Ok((h, b))),
        BandwidthMode::Auto { shared: true } => {
            Some(select_bandwidths(&data, &EstimandSpec::UnconditionalWald, &bw_opts).map(|r| (r.h_n, r.b_n)))
        }
        BandwidthMode::Auto { shared: false } => None,
    };
    cfg.estimands
        .iter()
        .zip(targets)
        .map(|(spec, &target)| {
            let (h, b) = match &shared {
                Some(r) => r.clone().ok()?,
                None => select_bandwidths(&data, spec, &bw_opts).map(|r| (r.h_n, r.b_n)).ok()?,
            };
            let rep = estimate(&data, spec, h, b, &opts).ok()?;
            Some(Draw { beta_hat: rep.rbc.beta_hat, beta_bc: rep.rbc.beta_bc, covered: rep.rbc.covers(target), h, b })
        })
        .collect()
}

fn summarize(spec: &EstimandSpec, target: f64, draws: &[Option<Draw>]) -> McRow {
    let ok: Vec<&Draw> = draws.iter().flatten().collect();
    let r = ok.len() as f64;
    let mean_of = |f: &dyn Fn(&Draw) -> f64| ok.iter().map(|d| f(d)).sum::<f64>() / r;
    let mean = mean_of(&|d| d.beta_hat);
    let variance = mean_of(&|d| (d.beta_hat - mean).powi(2));
    let bias = mean - target;
    McRow {
        estimand: spec.to_string(),
        target,
        mean,
        bias,
        bias_sq: bias * bias,
        variance,
        mse: bias * bias + variance,
        mse_bc: mean_of(&|d| (d.beta_bc - target).powi(2)),
        coverage: mean_of(&|d| if d.covered { 1.0 } else { 0.0 }),
        mean_h: mean_of(&|d| d.h),
        mean_b: mean_of(&|d| d.b),
        successes: ok.len(),
        failures: draws.len() - ok.len(),
    }
}

pub fn run_monte_carlo(cfg: &McConfig) -> Result<McReport> {
    cfg.validate()?;
    let truth = true_estimands_for(cfg.alpha_dw, cfg.beta_xw, cfg.w_support, cfg.coarsen);
    let targets = cfg
        .estimands
        .iter()
        .map(|spec| match cfg.target {
            Target::OwnEstimand => truth.value(spec),
            Target::UnconditionalLate => Ok(truth.beta_u),
        })
        .collect::<Result<Vec<f64>>>()?;

    let run = || -> Vec<Vec<Option<Draw>>> {
        (0..cfg.reps as u64).into_par_iter().map(|rep| replicate(cfg, rep, &targets)).collect()
    };
    let per_rep = match cfg.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?
            .install(run),
        None => run(),
    };

    let rows = cfg
        .estimands
        .iter()
        .enumerate()
        .map(|(e, spec)| {
            let draws: Vec<Option<Draw>> = per_rep.iter().map(|r| r[e]).collect();
            summarize(spec, targets[e], &draws)
        })
        .collect();
    Ok(McReport { config: cfg.clone(), truth, rows })
}
