use cwlate_core::{
    estimate, policy_effects, policy_from_instrument, run_monte_carlo, select_bandwidths, selection_on_gains_sign,
    weights_from_instrument, BandwidthOptions, BandwidthReport, EstimandSpec, EstimateOptions, EstimateReport,
    GainsSign, Kernel, McConfig, McReport, PolicyEffects, PolicySpec, RddDataset,
};
use serde::Serialize;

use crate::args::{BandwidthArgs, DataArgs, EstimateArgs, PolicyArgs, SimulateArgs};
use crate::error::{CliError, Result};
use crate::input::{read_dataset, write_dataset};
use crate::output::{emit, opt, render, Report};

pub const THREADS_VAR: &str = "CWLATE_THREADS";

fn estimands(data: &DataArgs) -> Result<Vec<EstimandSpec>> {
    data.estimands.iter().map(|s| s.parse::<EstimandSpec>().map_err(CliError::from)).collect()
}

#[derive(Debug, Serialize)]
pub struct GainsSummary {
    pub beta_cw: f64,
    pub beta_u: f64,
    pub sign: GainsSign,
}

#[derive(Debug, Serialize)]
pub struct EstimateRow {
    pub estimand: String,
    pub h: f64,
    pub b: f64,
    /// `manual` or `auto`.
    pub bandwidth: &'static str,
    pub se: f64,
    /// `None` when either comparison estimate fails at this bandwidth.
    pub selection_on_gains: Option<GainsSummary>,
    pub report: EstimateReport,
}

#[derive(Debug, Serialize)]
pub struct EstimateOutput {
    pub input: String,
    pub n: usize,
    pub kernel: Kernel,
    pub level: f64,
    pub rows: Vec<EstimateRow>,
}

impl Report for EstimateOutput {
    fn csv_header(&self) -> Vec<&'static str> {
        vec![
            "estimand",
            "h",
            "b",
            "bandwidth",
            "beta_hat",
            "beta_bc",
            "se",
            "ci_low",
            "ci_high",
            "n_used",
            "dropped",
            "gains_sign",
            "cell",
            "pi_hat",
            "delta_y",
            "delta_x",
            "conditional_late",
            "weight",
        ]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        let mut out = Vec::new();
        for row in &self.rows {
            let r = &row.report;
            let gains = row.selection_on_gains.as_ref().map(|g| g.sign.to_string()).unwrap_or_default();
            for cell in &r.cells {
                out.push(vec![
                    row.estimand.clone(),
                    row.h.to_string(),
                    row.b.to_string(),
                    row.bandwidth.to_string(),
                    r.rbc.beta_hat.to_string(),
                    r.rbc.beta_bc.to_string(),
                    row.se.to_string(),
                    r.rbc.ci.0.to_string(),
                    r.rbc.ci.1.to_string(),
                    r.n_used.to_string(),
                    r.dropped.join(";"),
                    gains.clone(),
                    cell.label.clone(),
                    cell.pi_hat.to_string(),
                    cell.delta_y.to_string(),
                    cell.delta_x.to_string(),
                    opt(cell.conditional_late),
                    cell.weight.to_string(),
                ]);
            }
        }
        out
    }
}

fn gains_at(data: &RddDataset, h: f64, b: f64, opts: &EstimateOptions) -> Option<GainsSummary> {
    let cw = estimate(data, &EstimandSpec::Cwlate, h, b, opts).ok()?.rbc.beta_hat;
    let u = estimate(data, &EstimandSpec::UnconditionalWald, h, b, opts).ok()?.rbc.beta_hat;
    let tol = 1e-12 * u.abs().max(1.0);
    Some(GainsSummary { beta_cw: cw, beta_u: u, sign: selection_on_gains_sign(cw, u, tol) })
}

fn bandwidth_pairs(args: &EstimateArgs) -> Result<Vec<(f64, f64)>> {
    if args.h.is_empty() {
        return Err(CliError::Usage("give --h values or --auto-bandwidth".into()));
    }
    let b = match args.b.len() {
        0 => args.h.clone(),
        1 => vec![args.b[0]; args.h.len()],
        k if k == args.h.len() => args.b.clone(),
        k => return Err(CliError::Usage(format!("--b has {k} values for {} values of --h", args.h.len()))),
    };
    Ok(args.h.iter().copied().zip(b).collect())
}

pub fn cmd_estimate(args: &EstimateArgs) -> Result<()> {
    let data = read_dataset(&args.data)?;
    let specs = estimands(&args.data)?;
    let opts = EstimateOptions {
        level: args.level,
        kernel: args.data.kernel,
        min_side_count: args.data.min_side_count,
        within_bandwidth: args.within_bandwidth_pi,
        ..EstimateOptions::default()
    };
    let bw_opts = BandwidthOptions {
        kernel: args.data.kernel,
        min_side_count: args.data.min_side_count,
        ..BandwidthOptions::default()
    };
    let manual = if args.auto_bandwidth { Vec::new() } else { bandwidth_pairs(args)? };

    let mut rows = Vec::new();
    for spec in &specs {
        let (pairs, source) = if args.auto_bandwidth {
            let r = select_bandwidths(&data, spec, &bw_opts)?;
            (vec![(r.h_n, r.b_n)], "auto")
        } else {
            (manual.clone(), "manual")
        };
        for (h, b) in pairs {
            let report = estimate(&data, spec, h, b, &opts)?;
            rows.push(EstimateRow {
                estimand: spec.to_string(),
                h,
                b,
                bandwidth: source,
                se: report.rbc.se_rbc,
                selection_on_gains: gains_at(&data, h, b, &opts),
                report,
            });
        }
    }
    let out = EstimateOutput {
        input: args.data.input.display().to_string(),
        n: data.len(),
        kernel: args.data.kernel,
        level: args.level,
        rows,
    };
    emit(args.output.output.as_deref(), &render(&out, args.output.format)?)
}

#[derive(Debug, Serialize)]
pub struct BandwidthOutput {
    pub input: String,
    pub reports: Vec<BandwidthReport>,
}

impl Report for BandwidthOutput {
    fn csv_header(&self) -> Vec<&'static str> {
        vec![
            "estimand",
            "kernel",
            "n",
            "c_n",
            "b_n",
            "h_n",
            "v_bc",
            "b_bc",
            "v_main",
            "b_main",
            "zero_bias_b",
            "zero_bias_h",
            "lower",
            "upper",
        ]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.reports
            .iter()
            .map(|r| {
                vec![
                    r.estimand.clone(),
                    r.kernel.to_string(),
                    r.n.to_string(),
                    r.c_n.to_string(),
                    r.b_n.to_string(),
                    r.h_n.to_string(),
                    r.v_bc.to_string(),
                    r.b_bc.to_string(),
                    r.v_main.to_string(),
                    r.b_main.to_string(),
                    r.zero_bias_b.to_string(),
                    r.zero_bias_h.to_string(),
                    r.lower.to_string(),
                    r.upper.to_string(),
                ]
            })
            .collect()
    }
}

pub fn cmd_bandwidth(args: &BandwidthArgs) -> Result<()> {
    let data = read_dataset(&args.data)?;
    let opts = BandwidthOptions {
        kernel: args.data.kernel,
        min_side_count: args.data.min_side_count,
        ..BandwidthOptions::default()
    };
    let reports = estimands(&args.data)?
        .iter()
        .map(|spec| select_bandwidths(&data, spec, &opts))
        .collect::<cwlate_core::Result<Vec<_>>>()?;
    let out = BandwidthOutput { input: args.data.input.display().to_string(), reports };
    emit(args.output.output.as_deref(), &render(&out, args.output.format)?)
}

#[derive(Debug, Serialize)]
pub struct SimulateOutput {
    #[serde(flatten)]
    pub report: McReport,
    /// `MSE(cwlate) / MSE(unconditional_wald)` when both were run.
    pub mse_ratio: Option<f64>,
}

impl Report for SimulateOutput {
    fn csv_header(&self) -> Vec<&'static str> {
        vec![
            "estimand",
            "target",
            "mean",
            "bias",
            "variance",
            "mse",
            "mse_bc",
            "coverage",
            "mean_h",
            "mean_b",
            "successes",
            "failures",
        ]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.report
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.estimand.clone(),
                    r.target.to_string(),
                    r.mean.to_string(),
                    r.bias.to_string(),
                    r.variance.to_string(),
                    r.mse.to_string(),
                    r.mse_bc.to_string(),
                    r.coverage.to_string(),
                    r.mean_h.to_string(),
                    r.mean_b.to_string(),
                    r.successes.to_string(),
                    r.failures.to_string(),
                ]
            })
            .collect()
    }
}

fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_VAR) {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::Env { name: THREADS_VAR, message: e.to_string() }),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(k) if k > 0 => Ok(Some(k)),
            _ => Err(CliError::Env { name: THREADS_VAR, message: format!("`{v}` is not a positive integer") }),
        },
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let path = &args.config;
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
    let mut cfg: McConfig =
        serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.clone(), source })?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(reps) = args.reps {
        cfg.reps = reps;
    }
    if let Some(k) = threads_from_env()? {
        cfg.threads = Some(k);
    }
    cfg.validate()?;
    if let Some(dump) = &args.dump_data {
        write_dataset(dump, &cwlate_core::dgp_sample(&cfg, 0))?;
    }
    let report = run_monte_carlo(&cfg)?;
    let mse = |spec| report.row(&spec).map(|r| r.mse);
    let mse_ratio = match (mse(EstimandSpec::Cwlate), mse(EstimandSpec::UnconditionalWald)) {
        (Some(a), Some(b)) => Some(a / b),
        _ => None,
    };
    let out = SimulateOutput { report, mse_ratio };
    emit(args.output.output.as_deref(), &render(&out, args.output.format)?)
}

#[derive(Debug, Serialize)]
pub struct PolicyOutput {
    pub policy: PolicySpec,
    pub delta_x: Vec<f64>,
    pub beta: Vec<f64>,
    /// Weights on conditional effects implied by the policy, normalised
    /// so that `Σ f ω = 1`.
    pub weights: Option<Vec<f64>>,
    #[serde(flatten)]
    pub effects: PolicyEffects,
}

impl Report for PolicyOutput {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["cell", "p", "f", "delta_x", "beta", "weight", "p_c", "ape", "lape"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        (0..self.policy.p.len())
            .map(|j| {
                vec![
                    j.to_string(),
                    self.policy.p[j].to_string(),
                    self.policy.f[j].to_string(),
                    self.delta_x[j].to_string(),
                    self.beta[j].to_string(),
                    opt(self.weights.as_ref().map(|w| w[j])),
                    self.effects.p_c.to_string(),
                    self.effects.ape.to_string(),
                    opt(self.effects.lape),
                ]
            })
            .collect()
    }
}

pub fn cmd_policy(args: &PolicyArgs) -> Result<()> {
    let policy = if args.b.is_empty() {
        PolicySpec::new(args.p.clone(), args.f.clone())?
    } else {
        policy_from_instrument(&args.b, &args.f)?
    };
    let effects = policy_effects(&policy, &args.beta, &args.delta_x)?;
    let weights = weights_from_instrument(&policy.instrument(), &args.delta_x, &policy.f).ok();
    let out = PolicyOutput { policy, delta_x: args.delta_x.clone(), beta: args.beta.clone(), weights, effects };
    emit(args.output.output.as_deref(), &render(&out, args.output.format)?)
}
