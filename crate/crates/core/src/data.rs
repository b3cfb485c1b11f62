//! Observations, covariate cells and kernels.
//!
//! The running variable is stored centred at the cutoff, so every other module
//! works with a cutoff of zero. Observations with `z >= 0` sit on the plus side.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel with support on `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Triangular,
    Uniform,
}

impl Kernel {
    pub fn weight(self, u: f64) -> f64 {
        if u.abs() > 1.0 {
            return 0.0;
        }
        match self {
            Kernel::Triangular => 1.0 - u.abs(),
            Kernel::Uniform => 0.5,
        }
    }

    /// Rule-of-thumb constant `C_K` of the pilot bandwidth.
    pub fn pilot_constant(self) -> f64 {
        match self {
            Kernel::Uniform => 1.843,
            Kernel::Triangular => 2.576,
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Triangular => f.write_str("triangular"),
            Kernel::Uniform => f.write_str("uniform"),
        }
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "triangular" | "tri" => Ok(Kernel::Triangular),
            "uniform" | "uni" => Ok(Kernel::Uniform),
            other => Err(Error::InvalidArgument(format!("unknown kernel `{other}`"))),
        }
    }
}

/// Raw estimation input: outcome, binary treatment, running variable and a
/// categorical covariate cell per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct RddDataset {
    y: Vec<f64>,
    x: Vec<f64>,
    z: Vec<f64>,
    cell: Vec<usize>,
    labels: Vec<String>,
    cutoff: f64,
}

/// Orders labels numerically when every label parses as a number, lexically otherwise.
fn sort_labels(labels: &mut [String]) {
    let numeric: Option<Vec<f64>> = labels.iter().map(|l| l.trim().parse::<f64>().ok()).collect();
    if numeric.is_some() {
        labels.sort_by(|a, b| {
            let (fa, fb) = (a.trim().parse::<f64>().unwrap(), b.trim().parse::<f64>().unwrap());
            fa.partial_cmp(&fb).unwrap_or(Ordering::Equal).then_with(|| a.cmp(b))
        });
    } else {
        labels.sort();
    }
}

impl RddDataset {
    /// Builds a dataset from per-observation cell labels. `z` is given on its
    /// original scale and is centred at `cutoff`.
    pub fn new(y: Vec<f64>, x: Vec<f64>, z: Vec<f64>, cells: Vec<String>, cutoff: f64) -> Result<Self> {
        let mut labels: Vec<String> = cells.clone();
        labels.sort();
        labels.dedup();
        sort_labels(&mut labels);
        let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let cell = cells.iter().map(|c| index[c.as_str()]).collect();
        Self::validated(y, x, z, cell, labels, cutoff)
    }

    /// Builds a dataset from cell indices into `labels`. Labels must be distinct.
    pub fn from_indexed(
        y: Vec<f64>,
        x: Vec<f64>,
        z: Vec<f64>,
        cell: Vec<usize>,
        labels: Vec<String>,
        cutoff: f64,
    ) -> Result<Self> {
        let mut sorted = labels.clone();
        sort_labels(&mut sorted);
        let before = sorted.len();
        sorted.dedup();
        if sorted.len() != before {
            return Err(Error::InvalidData("cell labels must be distinct".into()));
        }
        let remap: Vec<usize> = labels.iter().map(|l| sorted.iter().position(|s| s == l).unwrap()).collect();
        let mut mapped = Vec::with_capacity(cell.len());
        for &c in &cell {
            let Some(&target) = remap.get(c) else {
                return Err(Error::InvalidData(format!("cell index {c} has no label")));
            };
            mapped.push(target);
        }
        Self::validated(y, x, z, mapped, sorted, cutoff)
    }

    fn validated(
        y: Vec<f64>,
        x: Vec<f64>,
        z: Vec<f64>,
        cell: Vec<usize>,
        labels: Vec<String>,
        cutoff: f64,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if x.len() != n || z.len() != n || cell.len() != n {
            return Err(Error::InvalidData(format!(
                "column lengths differ: y={n}, x={}, z={}, cell={}",
                x.len(),
                z.len(),
                cell.len()
            )));
        }
        if !cutoff.is_finite() {
            return Err(Error::InvalidData("cutoff must be finite".into()));
        }
        for i in 0..n {
            if !y[i].is_finite() {
                return Err(Error::InvalidData(format!("y is not finite at row {i}")));
            }
            if !z[i].is_finite() {
                return Err(Error::InvalidData(format!("z is not finite at row {i}")));
            }
            if x[i] != 0.0 && x[i] != 1.0 {
                return Err(Error::InvalidData(format!("treatment must be 0 or 1, found {} at row {i}", x[i])));
            }
        }
        let z = z.into_iter().map(|v| v - cutoff).collect();
        Ok(Self { y, x, z, cell, labels, cutoff })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Running variable centred at the cutoff.
    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Index into [`labels`](Self::labels) for every observation.
    pub fn cell_indices(&self) -> &[usize] {
        &self.cell
    }

    pub fn cell_label(&self, i: usize) -> &str {
        &self.labels[self.cell[i]]
    }

    pub fn variable(&self, v: crate::localpoly::Variable) -> &[f64] {
        match v {
            crate::localpoly::Variable::Y => &self.y,
            crate::localpoly::Variable::X => &self.x,
        }
    }

    fn subset(&self, keep: impl Fn(usize) -> bool) -> Result<Self> {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        if idx.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Self {
            y: idx.iter().map(|&i| self.y[i]).collect(),
            x: idx.iter().map(|&i| self.x[i]).collect(),
            z: idx.iter().map(|&i| self.z[i]).collect(),
            cell: idx.iter().map(|&i| self.cell[i]).collect(),
            labels: self.labels.clone(),
            cutoff: self.cutoff,
        })
    }

    /// Observations with `|z| <= h`.
    pub fn within(&self, h: f64) -> Result<Self> {
        self.subset(|i| self.z[i].abs() <= h)
    }

    /// Same observations collapsed into a single cell labelled `all`.
    pub fn pooled(&self) -> Self {
        Self {
            y: self.y.clone(),
            x: self.x.clone(),
            z: self.z.clone(),
            cell: vec![0; self.len()],
            labels: vec!["all".to_string()],
            cutoff: self.cutoff,
        }
    }

    /// Maps every cell label through `f`; labels sharing an image are merged.
    pub fn relabel(&self, f: impl Fn(&str) -> String) -> Self {
        let cells: Vec<String> = self.cell.iter().map(|&c| f(&self.labels[c])).collect();
        let z: Vec<f64> = self.z.iter().map(|v| v + self.cutoff).collect();
        Self::new(self.y.clone(), self.x.clone(), z, cells, self.cutoff).expect("relabelling preserves validity")
    }
}

/// Covariate cells retained for estimation, with their sample shares and
/// per-side counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellPartition {
    pub labels: Vec<String>,
    pub pi_hat: Vec<f64>,
    pub n_left: Vec<usize>,
    pub n_right: Vec<usize>,
    /// Labels of cells excluded for lack of observations on one side.
    pub dropped: Vec<String>,
    #[serde(skip)]
    obs_cell: Vec<Option<usize>>,
    n_retained: usize,
}

impl CellPartition {
    /// Partition known only through its cell shares, with no observations attached.
    pub fn from_shares(labels: Vec<String>, pi_hat: Vec<f64>) -> Result<Self> {
        if labels.len() != pi_hat.len() || labels.is_empty() {
            return Err(Error::InvalidArgument("labels and shares must match and be nonempty".into()));
        }
        if pi_hat.iter().any(|&p| !(p.is_finite() && p > 0.0)) {
            return Err(Error::InvalidArgument("cell shares must be positive".into()));
        }
        let total: f64 = pi_hat.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("cell shares sum to {total}, not 1")));
        }
        let m = labels.len();
        Ok(Self {
            labels,
            pi_hat,
            n_left: vec![0; m],
            n_right: vec![0; m],
            dropped: Vec::new(),
            obs_cell: Vec::new(),
            n_retained: 0,
        })
    }

    pub fn m(&self) -> usize {
        self.labels.len()
    }

    /// Retained-cell index of observation `i`, if its cell was kept.
    pub fn cell_of(&self, i: usize) -> Option<usize> {
        self.obs_cell[i]
    }

    /// Number of observations in retained cells.
    pub fn n(&self) -> usize {
        self.n_retained
    }

    pub fn total_count(&self, j: usize) -> usize {
        self.n_left[j] + self.n_right[j]
    }
}

/// Groups observations by cell and keeps the cells with at least
/// `min_side_count` observations on each side of the cutoff.
pub fn build_partition(data: &RddDataset, min_side_count: usize) -> Result<CellPartition> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let k = data.labels.len();
    let mut left = vec![0usize; k];
    let mut right = vec![0usize; k];
    for (i, &c) in data.cell.iter().enumerate() {
        if data.z[i] >= 0.0 {
            right[c] += 1;
        } else {
            left[c] += 1;
        }
    }

    let mut retained_index = vec![None; k];
    let mut labels = Vec::new();
    let mut n_left = Vec::new();
    let mut n_right = Vec::new();
    let mut dropped = Vec::new();
    for c in 0..k {
        if left[c] + right[c] == 0 {
            continue;
        }
        if left[c] >= min_side_count && right[c] >= min_side_count {
            retained_index[c] = Some(labels.len());
            labels.push(data.labels[c].clone());
            n_left.push(left[c]);
            n_right.push(right[c]);
        } else {
            dropped.push(data.labels[c].clone());
        }
    }
    if labels.is_empty() {
        return Err(Error::AllCellsDropped { min_side_count });
    }

    let n_retained: usize = n_left.iter().chain(n_right.iter()).sum();
    let pi_hat = n_left.iter().zip(&n_right).map(|(l, r)| (l + r) as f64 / n_retained as f64).collect();
    let obs_cell = data.cell.iter().map(|&c| retained_index[c]).collect();

    Ok(CellPartition { labels, pi_hat, n_left, n_right, dropped, obs_cell, n_retained })
}
