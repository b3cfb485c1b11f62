mod common;

use cwlate_core::{
    build_partition, cell_discontinuities, fit_side, fit_side_stacked, residual_psi, Kernel, PsiSpec, RddDataset, Side,
    Variable,
};
use proptest::prelude::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stacked_equals_per_cell(seed in 0u64..500, n in 200usize..500, m in 1usize..5, p in 0usize..3, h in 1.0f64..2.5) {
        let data = common::fuzzy(seed, n, m);
        let part = build_partition(&data, p + 2).unwrap();
        for side in Side::BOTH {
            for var in [Variable::Y, Variable::X] {
                let a = fit_side(&data, &part, var, side, p, h, Kernel::Triangular).unwrap();
                let b = fit_side_stacked(&data, &part, var, side, p, h, Kernel::Triangular).unwrap();
                for (ra, rb) in a.coefficients.iter().zip(&b.coefficients) {
                    for (x, y) in ra.iter().zip(rb) {
                        prop_assert!(close(*x, *y, 1e-10), "{x} vs {y}");
                    }
                }
            }
        }
    }

    #[test]
    fn location_shift(seed in 0u64..500, shift in -50.0f64..50.0) {
        let data = common::fuzzy(seed, 400, 3);
        let moved = common::with_y(&data, data.y().iter().map(|y| y + shift).collect());
        let part = build_partition(&data, 3).unwrap();
        let a = cell_discontinuities(&data, &part, 1, 1.5, Kernel::Triangular).unwrap();
        let b = cell_discontinuities(&moved, &part, 1, 1.5, Kernel::Triangular).unwrap();
        for j in 0..a.m() {
            prop_assert!((a.delta_y[j] - b.delta_y[j]).abs() <= 1e-12 * shift.abs().max(1.0));
            prop_assert!(close(b.mu_y_plus[j], a.mu_y_plus[j] + shift, 1e-12));
        }
    }

    #[test]
    fn scale(seed in 0u64..500, a in -5.0f64..5.0) {
        prop_assume!(a.abs() > 0.1);
        let data = common::fuzzy(seed, 400, 3);
        let scaled = common::with_y(&data, data.y().iter().map(|y| a * y).collect());
        let part = build_partition(&data, 3).unwrap();
        let d0 = cell_discontinuities(&data, &part, 1, 1.5, Kernel::Triangular).unwrap();
        let d1 = cell_discontinuities(&scaled, &part, 1, 1.5, Kernel::Triangular).unwrap();
        for j in 0..d0.m() {
            prop_assert!(close(d1.delta_y[j], a * d0.delta_y[j], 1e-11));
        }
        for side in Side::BOTH {
            let f0 = fit_side(&data, &part, Variable::Y, side, 2, 1.5, Kernel::Triangular).unwrap();
            let f1 = fit_side(&scaled, &part, Variable::Y, side, 2, 1.5, Kernel::Triangular).unwrap();
            for (r0, r1) in f0.coefficients.iter().zip(&f1.coefficients) {
                for (x0, x1) in r0.iter().zip(r1) {
                    prop_assert!(close(*x1, a * x0, 1e-11));
                }
            }
            let spec = PsiSpec { u: Variable::Y, v: Variable::Y, p: 1, q: 2, h: 1.5, b: 1.8, side };
            let p0 = residual_psi(&data, &part, &d0.residuals(&data), Kernel::Triangular, &spec);
            let p1 = residual_psi(&scaled, &part, &d1.residuals(&scaled), Kernel::Triangular, &spec);
            for (x0, x1) in p0.iter().zip(p1.iter()) {
                prop_assert!(close(*x1, a * a * x0, 1e-10));
            }
        }
    }

    #[test]
    fn mirror(seed in 0u64..500, p in 1usize..3) {
        let data = common::fuzzy(seed, 400, 2);
        prop_assume!(data.z().iter().all(|&z| z != 0.0));
        let mirrored = RddDataset::from_indexed(
            data.y().to_vec(),
            data.x().to_vec(),
            data.z().iter().map(|z| -z).collect(),
            data.cell_indices().to_vec(),
            data.labels().to_vec(),
            0.0,
        )
        .unwrap();
        let part = build_partition(&data, p + 2).unwrap();
        let mpart = build_partition(&mirrored, p + 2).unwrap();
        for (side, other) in [(Side::Plus, Side::Minus), (Side::Minus, Side::Plus)] {
            let a = fit_side(&data, &part, Variable::Y, side, p, 1.5, Kernel::Triangular).unwrap();
            let b = fit_side(&mirrored, &mpart, Variable::Y, other, p, 1.5, Kernel::Triangular).unwrap();
            for (ra, rb) in a.coefficients.iter().zip(&b.coefficients) {
                prop_assert!(close(ra[0], rb[0], 1e-11));
                prop_assert!(close(ra[1], -rb[1], 1e-11));
            }
        }
    }
}

/// Cellwise quadratics on each side, reproduced exactly by order-2 fits.
#[test]
fn exact_degree_reproduction() {
    let coef = |j: usize, plus: bool| {
        let s = if plus { 1.0 } else { -0.5 };
        [1.0 + j as f64, 0.3 * s - 0.1 * j as f64, 0.7 + 0.2 * j as f64 * s]
    };
    let (mut y, mut z, mut cells) = (vec![], vec![], vec![]);
    for j in 0..3 {
        for i in 0..60 {
            let zi = -1.5 + 3.0 * (i as f64 + 0.37) / 60.0;
            let c = coef(j, zi >= 0.0);
            y.push(c[0] + c[1] * zi + c[2] * zi * zi);
            z.push(zi);
            cells.push(common::LABELS[j].to_string());
        }
    }
    let n = y.len();
    let data = RddDataset::new(y, vec![0.0; n], z, cells, 0.0).unwrap();
    let part = build_partition(&data, 3).unwrap();
    for side in Side::BOTH {
        let fit = fit_side(&data, &part, Variable::Y, side, 2, 1.2, Kernel::Triangular).unwrap();
        for j in 0..3 {
            let c = coef(j, side == Side::Plus);
            for (v, cv) in c.iter().enumerate() {
                assert!((fit.coefficients[j][v] - cv).abs() < 1e-10, "{side} cell {j} coef {v}");
            }
        }
    }
    let d = cell_discontinuities(&data, &part, 2, 1.2, Kernel::Uniform).unwrap();
    for j in 0..3 {
        assert!((d.delta_y[j] - (coef(j, true)[0] - coef(j, false)[0])).abs() < 1e-10);
    }
}
