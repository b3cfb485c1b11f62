//! Browser bindings for the demo page: a true-estimand explorer, a policy
//! calculator, and one simulated sample estimated end to end.
//!
//! Every export returns a JSON string, either `{"ok": true, "value": ...}` or
//! `{"ok": false, "error": "..."}`, so the logic runs natively in tests.

use cwlate_core::simulation::{true_estimands, TrueEstimands};
use cwlate_core::{
    dgp_sample, estimate, policy_effects, select_bandwidths, selection_on_gains_sign, weights_from_instrument,
    BandwidthOptions, EstimandSpec, EstimateOptions, GainsSign, McConfig, PolicySpec, RddDataset,
};
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::wasm_bindgen;

fn respond<T: Serialize>(result: Result<T, String>) -> String {
    let body = result.and_then(|value| serde_json::to_value(value).map_err(|e| e.to_string()));
    match body {
        Ok(value) => json!({ "ok": true, "value": value }),
        Err(error) => json!({ "ok": false, "error": error }),
    }
    .to_string()
}

#[derive(Debug, Clone, Serialize)]
pub struct TruthView {
    pub truth: TrueEstimands,
    /// Share of each estimand attributed to each cell.
    pub weights_u: Vec<f64>,
    pub weights_cw: Vec<f64>,
    pub gains: GainsSign,
    /// `(β_XW, β_U, β_CW)` over a grid of effect heterogeneity.
    pub curve: Vec<(f64, f64, f64)>,
}

pub fn truth_view(alpha_dw: f64, beta_xw: f64) -> Result<TruthView, String> {
    if !(alpha_dw.is_finite() && beta_xw.is_finite()) {
        return Err("parameters must be finite".into());
    }
    let truth = true_estimands(alpha_dw, beta_xw);
    let share = |pow: i32| {
        let raw: Vec<f64> = truth.pi.iter().zip(&truth.delta_x).map(|(p, x)| p * x.powi(pow)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect::<Vec<_>>()
    };
    let curve = (-20..=20)
        .map(|k| {
            let b = k as f64 / 2.0;
            let t = true_estimands(alpha_dw, b);
            (b, t.beta_u, t.beta_cw)
        })
        .collect();
    Ok(TruthView {
        weights_u: share(1),
        weights_cw: share(2),
        gains: selection_on_gains_sign(truth.beta_cw, truth.beta_u, 1e-12),
        truth,
        curve,
    })
}

#[wasm_bindgen]
pub fn explore_truth(alpha_dw: f64, beta_xw: f64) -> String {
    respond(truth_view(alpha_dw, beta_xw))
}

#[derive(Debug, Clone, Serialize)]
pub struct PolicyView {
    pub p: Vec<f64>,
    pub f: Vec<f64>,
    pub p_c: f64,
    pub ape: f64,
    pub lape: Option<f64>,
    /// Weights on conditional effects with `Σ f ω = 1`, `None` when no
    /// complier is reached.
    pub weights: Option<Vec<f64>>,
}

pub fn policy_view(p: &[f64], f: &[f64], delta_x: &[f64], beta: &[f64]) -> Result<PolicyView, String> {
    let spec = PolicySpec::new(p.to_vec(), f.to_vec()).map_err(|e| e.to_string())?;
    let effects = policy_effects(&spec, beta, delta_x).map_err(|e| e.to_string())?;
    let weights = weights_from_instrument(&spec.instrument(), delta_x, f).ok();
    Ok(PolicyView { p: spec.p, f: spec.f, p_c: effects.p_c, ape: effects.ape, lape: effects.lape, weights })
}

#[wasm_bindgen]
pub fn policy_calculator(p: Vec<f64>, f: Vec<f64>, delta_x: Vec<f64>, beta: Vec<f64>) -> String {
    respond(policy_view(&p, &f, &delta_x, &beta))
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateView {
    pub estimand: String,
    pub truth: f64,
    pub beta_hat: f64,
    pub beta_bc: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub covers: bool,
    pub h: f64,
    pub b: f64,
}

/// Treatment rate per cell within one bin of the running variable.
#[derive(Debug, Clone, Serialize)]
pub struct Bin {
    pub z: f64,
    pub rate: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunView {
    pub n: usize,
    pub labels: Vec<String>,
    pub estimates: Vec<EstimateView>,
    pub bins: Vec<Bin>,
}

const BINS: usize = 40;
const BIN_RANGE: f64 = 4.0;

fn first_stage_bins(data: &RddDataset) -> Vec<Bin> {
    let m = data.labels().len();
    let width = 2.0 * BIN_RANGE / BINS as f64;
    let mut sums = vec![vec![(0.0, 0usize); m]; BINS];
    for i in 0..data.len() {
        let z = data.z()[i];
        if z.abs() >= BIN_RANGE {
            continue;
        }
        let k = ((z + BIN_RANGE) / width) as usize;
        let slot = &mut sums[k.min(BINS - 1)][data.cell_indices()[i]];
        slot.0 += data.x()[i];
        slot.1 += 1;
    }
    sums.into_iter()
        .enumerate()
        .map(|(k, cells)| Bin {
            z: -BIN_RANGE + (k as f64 + 0.5) * width,
            rate: cells.into_iter().map(|(s, c)| (c > 0).then(|| s / c as f64)).collect(),
        })
        .collect()
}

/// Draws one sample of the simulation design and estimates both the
/// compliance-weighted and the pooled LATE at bandwidths selected for each.
pub fn simulate_view(alpha_dw: f64, beta_xw: f64, n: usize, seed: u64) -> Result<RunView, String> {
    let cfg = McConfig::new(alpha_dw, beta_xw, n, 1, seed);
    cfg.validate().map_err(|e| e.to_string())?;
    let data = dgp_sample(&cfg, 0);
    let truth = true_estimands(alpha_dw, beta_xw);
    let estimates = [EstimandSpec::Cwlate, EstimandSpec::UnconditionalWald]
        .into_iter()
        .map(|spec| {
            let bw = select_bandwidths(&data, &spec, &BandwidthOptions::default()).map_err(|e| e.to_string())?;
            let r = estimate(&data, &spec, bw.h_n, bw.b_n, &EstimateOptions::default()).map_err(|e| e.to_string())?;
            let target = truth.value(&spec).map_err(|e| e.to_string())?;
            Ok(EstimateView {
                estimand: spec.to_string(),
                truth: target,
                beta_hat: r.rbc.beta_hat,
                beta_bc: r.rbc.beta_bc,
                se: r.rbc.se_rbc,
                ci: r.rbc.ci,
                covers: r.rbc.covers(target),
                h: bw.h_n,
                b: bw.b_n,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(RunView { n: data.len(), labels: data.labels().to_vec(), estimates, bins: first_stage_bins(&data) })
}

#[wasm_bindgen]
pub fn simulate_and_estimate(alpha_dw: f64, beta_xw: f64, n: u32, seed: u32) -> String {
    respond(simulate_view(alpha_dw, beta_xw, n as usize, u64::from(seed)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn truth_envelope() {
        let v: Value = serde_json::from_str(&explore_truth(1.0, 2.0)).unwrap();
        assert_eq!(v["ok"], true);
        let beta_cw = v["value"]["truth"]["beta_cw"].as_f64().unwrap();
        assert!((beta_cw - 3.979).abs() < 1e-3);
        assert_eq!(v["value"]["gains"], "positive");
        let w: f64 = v["value"]["weights_cw"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
        assert!((w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn policy_envelope() {
        let v: Value =
            serde_json::from_str(&policy_calculator(vec![1.0, 0.0], vec![0.5, 0.5], vec![0.5, 0.2], vec![4.0, 0.0]))
                .unwrap();
        assert_eq!(v["value"]["lape"].as_f64(), Some(4.0));
        let bad: Value =
            serde_json::from_str(&policy_calculator(vec![0.7, 0.7], vec![0.5, 0.5], vec![0.5, 0.2], vec![4.0, 0.0]))
                .unwrap();
        assert_eq!(bad["ok"], false);
        assert!(bad["error"].as_str().unwrap().contains("sums to"));
    }

    #[test]
    fn simulated_run() {
        let run = simulate_view(1.0, 2.0, 3000, 1).unwrap();
        assert_eq!(run.estimates.len(), 2);
        assert_eq!(run.bins.len(), BINS);
        for e in &run.estimates {
            assert!(e.ci.0 < e.beta_bc && e.beta_bc < e.ci.1);
        }
        let v: Value = serde_json::from_str(&simulate_and_estimate(1.0, 2.0, 10, 1)).unwrap();
        assert_eq!(v["ok"], false);
    }
}
