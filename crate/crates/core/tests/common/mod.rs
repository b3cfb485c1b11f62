#![allow(dead_code)]

use cwlate_core::RddDataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const LABELS: [&str; 5] = ["a", "b", "c", "d", "e"];

/// Fuzzy design with a cell-specific first stage; `z` is uniform on (-2, 2).
pub fn fuzzy(seed: u64, n: usize, m: usize) -> RddDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut y, mut x, mut z, mut cells) = (vec![], vec![], vec![], vec![]);
    for _ in 0..n {
        let zi: f64 = rng.gen_range(-2.0..2.0);
        let j = rng.gen_range(0..m);
        let jump = if zi >= 0.0 { 0.3 + 0.1 * j as f64 } else { 0.0 };
        let xi = if rng.gen::<f64>() < 0.2 + jump + 0.05 * zi { 1.0 } else { 0.0 };
        let e: f64 = rng.sample(StandardNormal);
        y.push(1.0 + (1.0 + j as f64) * xi + 0.5 * zi - 0.2 * zi * zi + e);
        x.push(xi);
        z.push(zi);
        cells.push(LABELS[j].to_string());
    }
    RddDataset::new(y, x, z, cells, 0.0).unwrap()
}

pub fn with_y(data: &RddDataset, y: Vec<f64>) -> RddDataset {
    RddDataset::from_indexed(
        y,
        data.x().to_vec(),
        data.z().to_vec(),
        data.cell_indices().to_vec(),
        data.labels().to_vec(),
        0.0,
    )
    .unwrap()
}
