use cwlate_core::{policy_effects, policy_from_instrument, wlate, CellDiscontinuities, EstimandSpec, PolicySpec};
use proptest::collection::vec;
use proptest::prelude::*;

fn normalise(v: &[f64]) -> Vec<f64> {
    let t: f64 = v.iter().sum();
    v.iter().map(|x| x / t).collect()
}

fn inputs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (2usize..7).prop_flat_map(|m| (vec(0.05f64..1.0, m), vec(0.01f64..1.0, m), vec(-5.0f64..5.0, m)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn instrument_round_trip((fraw, dx, beta) in inputs(), b0 in vec(0.1f64..4.0, 7)) {
        let f = normalise(&fraw);
        let b = &b0[..f.len()];
        let back = policy_from_instrument(b, &f).unwrap().instrument();
        let ratio = back[0] / b[0];
        for (x, y) in back.iter().zip(b) {
            prop_assert!((x / y - ratio).abs() <= 1e-12 * ratio);
        }
        let dy: Vec<f64> = beta.iter().zip(&dx).map(|(b, x)| b * x).collect();
        let d = CellDiscontinuities::from_parts(dy, dx.clone(), f.clone()).unwrap();
        let a = wlate(&d, &EstimandSpec::Custom(b.to_vec())).unwrap().beta_hat;
        let c = wlate(&d, &EstimandSpec::Custom(back)).unwrap().beta_hat;
        prop_assert!((a - c).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn compliance_tilted_policy_targets_cwlate((fraw, dx, beta) in inputs()) {
        let f = normalise(&fraw);
        let dy: Vec<f64> = beta.iter().zip(&dx).map(|(b, x)| b * x).collect();
        let d = CellDiscontinuities::from_parts(dy, dx.clone(), f.clone()).unwrap();
        let cw = wlate(&d, &EstimandSpec::Cwlate).unwrap().beta_hat;
        let lape = policy_effects(&policy_from_instrument(&dx, &f).unwrap(), &beta, &dx).unwrap().lape.unwrap();
        prop_assert!((lape - cw).abs() <= 1e-12 * cw.abs().max(1.0));
    }

    #[test]
    fn untargeted_policy_is_pooled_aggregate((fraw, dx, beta) in inputs()) {
        let f = normalise(&fraw);
        let num: f64 = (0..f.len()).map(|j| f[j] * dx[j] * beta[j]).sum();
        let den: f64 = (0..f.len()).map(|j| f[j] * dx[j]).sum();
        let lape = policy_effects(&PolicySpec::new(f.clone(), f).unwrap(), &beta, &dx).unwrap().lape.unwrap();
        prop_assert!((lape - num / den).abs() <= 1e-12 * (num / den).abs().max(1.0));
    }

    #[test]
    fn ape_is_linear_in_targeting((fraw, dx, beta) in inputs(), lambda in 0.0f64..1.0, seed in vec(0.01f64..1.0, 7)) {
        let f = normalise(&fraw);
        let p = f.clone();
        let q = normalise(&seed[..f.len()]);
        let mix: Vec<f64> = p.iter().zip(&q).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
        let ape = |t: &[f64]| policy_effects(&PolicySpec::new(t.to_vec(), f.clone()).unwrap(), &beta, &dx).unwrap().ape;
        let want = lambda * ape(&p) + (1.0 - lambda) * ape(&q);
        prop_assert!((ape(&mix) - want).abs() <= 1e-12);
    }
}
