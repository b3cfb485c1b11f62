//! One-sided local polynomial fits within covariate cells.
//!
//! Regressors are `r_p(z/h) ⊗ w`, with `w` the one-hot cell indicator, so the
//! stacked normal equations are block diagonal and every quantity can be built
//! one cell at a time. Stacked matrices use the index `k * m + j` for power `k`
//! and cell `j`.
//!
//! Fitted coefficients are reported in Taylor form: entry `v` estimates
//! `mu^(v)(0) / v!`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{CellPartition, Kernel, RddDataset};
use crate::error::{Error, Result};

const MAX_ORDER: usize = 4;
const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Plus, Side::Minus];

    pub fn contains(self, z: f64) -> bool {
        match self {
            Side::Plus => z >= 0.0,
            Side::Minus => z < 0.0,
        }
    }

    /// Sign with which this side's limit enters a discontinuity.
    pub fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Plus => f.write_str("plus"),
            Side::Minus => f.write_str("minus"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variable {
    Y,
    X,
}

fn powers(u: f64, p: usize) -> [f64; MAX_ORDER + 1] {
    let mut r = [0.0; MAX_ORDER + 1];
    r[0] = 1.0;
    for k in 1..=p {
        r[k] = r[k - 1] * u;
    }
    r
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// One observation inside a kernel window: row index, `z/h`, and `k_h(z)`.
#[derive(Debug, Clone, Copy)]
struct WindowObs {
    index: usize,
    u: f64,
    weight: f64,
}

#[derive(Debug, Clone)]
struct CellBlock {
    obs: Vec<WindowObs>,
    gamma: DMatrix<f64>,
    gamma_inv: DMatrix<f64>,
}

/// Weighted design of an order-`p` fit on one side of the cutoff, factored
/// cell by cell.
#[derive(Debug, Clone)]
pub struct SideDesign {
    side: Side,
    order: usize,
    bandwidth: f64,
    kernel: Kernel,
    n: usize,
    blocks: Vec<CellBlock>,
}

impl SideDesign {
    pub fn new(
        data: &RddDataset,
        partition: &CellPartition,
        side: Side,
        order: usize,
        h: f64,
        kernel: Kernel,
    ) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}")));
        }
        if order > MAX_ORDER {
            return Err(Error::InvalidArgument(format!(
                "polynomial order {order} exceeds the supported maximum {MAX_ORDER}"
            )));
        }
        let m = partition.m();
        let n = partition.n();
        let mut obs: Vec<Vec<WindowObs>> = vec![Vec::new(); m];
        for (i, &z) in data.z().iter().enumerate() {
            let Some(j) = partition.cell_of(i) else { continue };
            if !side.contains(z) {
                continue;
            }
            let u = z / h;
            let weight = kernel.weight(u) / h;
            if weight > 0.0 {
                obs[j].push(WindowObs { index: i, u, weight });
            }
        }

        let dim = order + 1;
        let mut blocks = Vec::with_capacity(m);
        for (j, cell_obs) in obs.into_iter().enumerate() {
            if cell_obs.len() < dim {
                return Err(Error::InsufficientSupport {
                    cell: partition.labels[j].clone(),
                    side,
                    order,
                    available: cell_obs.len(),
                    needed: dim,
                });
            }
            let mut gamma = DMatrix::<f64>::zeros(dim, dim);
            for o in &cell_obs {
                let r = powers(o.u, order);
                for a in 0..dim {
                    for b in a..dim {
                        gamma[(a, b)] += o.weight * r[a] * r[b];
                    }
                }
            }
            for a in 0..dim {
                for b in a..dim {
                    gamma[(a, b)] /= n as f64;
                    gamma[(b, a)] = gamma[(a, b)];
                }
            }
            let sv = gamma.clone().singular_values();
            let (smax, smin) = (sv.max(), sv.min());
            let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
            if condition > MAX_CONDITION {
                return Err(Error::SingularDesign { cell: partition.labels[j].clone(), side, condition });
            }
            let gamma_inv = gamma.clone().full_piv_lu().try_inverse().ok_or_else(|| Error::SingularDesign {
                cell: partition.labels[j].clone(),
                side,
                condition,
            })?;
            blocks.push(CellBlock { obs: cell_obs, gamma, gamma_inv });
        }

        Ok(Self { side, order, bandwidth: h, kernel, n, blocks })
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn m(&self) -> usize {
        self.blocks.len()
    }

    /// Observations of cell `j` with positive kernel weight.
    pub fn effective_count(&self, j: usize) -> usize {
        self.blocks[j].obs.len()
    }

    /// Cell block of `Γ_{±,p}(h)` in the rescaled basis.
    pub fn gamma(&self, j: usize) -> &DMatrix<f64> {
        &self.blocks[j].gamma
    }

    /// Taylor-form coefficients of the weighted regression of `values` per cell.
    pub fn solve(&self, values: &[f64]) -> Vec<Vec<f64>> {
        let dim = self.order + 1;
        self.blocks
            .iter()
            .map(|block| {
                let mut rhs = DVector::<f64>::zeros(dim);
                for o in &block.obs {
                    let r = powers(o.u, self.order);
                    let wv = o.weight * values[o.index];
                    for a in 0..dim {
                        rhs[a] += wv * r[a];
                    }
                }
                rhs /= self.n as f64;
                let scaled = &block.gamma_inv * rhs;
                (0..dim).map(|v| scaled[v] / self.bandwidth.powi(v as i32)).collect()
            })
            .collect()
    }

    pub fn fit(&self, data: &RddDataset, variable: Variable) -> SideFit {
        SideFit {
            side: self.side,
            order: self.order,
            bandwidth: self.bandwidth,
            variable,
            coefficients: self.solve(data.variable(variable)),
        }
    }

    /// `s! e_s' Γ⁻¹ ϑ_{p,q}` for every cell.
    pub fn bias_constants(&self, s: usize, q: usize) -> Vec<f64> {
        let dim = self.order + 1;
        self.blocks
            .iter()
            .map(|block| {
                let mut theta = DVector::<f64>::zeros(dim);
                for o in &block.obs {
                    let r = powers(o.u, self.order);
                    let uq = o.u.powi(q as i32);
                    for a in 0..dim {
                        theta[a] += o.weight * r[a] * uq;
                    }
                }
                theta /= self.n as f64;
                factorial(s) * (block.gamma_inv.row(s) * theta)[0]
            })
            .collect()
    }

    /// Per-cell block of `Ψ̂` between this design and `other`, which must be on
    /// the same side of the same partition.
    fn psi_block(&self, other: &SideDesign, eps_u: &[f64], eps_v: &[f64], j: usize) -> DMatrix<f64> {
        let (pa, pb) = (self.order + 1, other.order + 1);
        let mut psi = DMatrix::<f64>::zeros(pa, pb);
        for o in &self.blocks[j].obs {
            let ub = o.u * self.bandwidth / other.bandwidth;
            let wb = other.kernel.weight(ub) / other.bandwidth;
            if wb == 0.0 {
                continue;
            }
            let ra = powers(o.u, self.order);
            let rb = powers(ub, other.order);
            let scale = o.weight * wb * eps_u[o.index] * eps_v[o.index];
            for a in 0..pa {
                for b in 0..pb {
                    psi[(a, b)] += scale * ra[a] * rb[b];
                }
            }
        }
        psi / self.n as f64
    }
}

/// Estimator of one Taylor coefficient of one variable on one side.
#[derive(Debug, Clone, Copy)]
pub struct Component<'a> {
    pub design: &'a SideDesign,
    /// Taylor coefficient index.
    pub s: usize,
    pub variable: Variable,
}

/// Heteroskedasticity-robust covariance of a set of coefficient estimators
/// from designs on the same side, one matrix per cell. Entries are on the
/// Taylor-coefficient scale.
pub fn component_covariance(residuals: &Residuals, comps: &[Component<'_>]) -> Vec<DMatrix<f64>> {
    let k = comps.len();
    let Some(first) = comps.first() else { return Vec::new() };
    let m = first.design.m();
    let n = first.design.n as f64;
    (0..m)
        .map(|j| {
            let mut cov = DMatrix::<f64>::zeros(k, k);
            for a in 0..k {
                for b in a..k {
                    let (ca, cb) = (&comps[a], &comps[b]);
                    let psi = ca.design.psi_block(cb.design, residuals.get(ca.variable), residuals.get(cb.variable), j);
                    let ga = ca.design.blocks[j].gamma_inv.row(ca.s).transpose();
                    let gb = cb.design.blocks[j].gamma_inv.row(cb.s).transpose();
                    let value = (ga.transpose() * psi * gb)[0]
                        / n
                        / ca.design.bandwidth.powi(ca.s as i32)
                        / cb.design.bandwidth.powi(cb.s as i32);
                    cov[(a, b)] = value;
                    cov[(b, a)] = value;
                }
            }
            cov
        })
        .collect()
}

/// Per-cell local polynomial coefficients on one side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideFit {
    pub side: Side,
    pub order: usize,
    pub bandwidth: f64,
    pub variable: Variable,
    /// Row `j` holds `(mu, mu', mu''/2!, ...)` for cell `j`.
    pub coefficients: Vec<Vec<f64>>,
}

impl SideFit {
    pub fn intercepts(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c[0]).collect()
    }

    pub fn taylor(&self, v: usize) -> Vec<f64> {
        self.coefficients.iter().map(|c| c[v]).collect()
    }

    pub fn derivative(&self, j: usize, v: usize) -> f64 {
        factorial(v) * self.coefficients[j][v]
    }
}

pub fn fit_side(
    data: &RddDataset,
    partition: &CellPartition,
    variable: Variable,
    side: Side,
    p: usize,
    h: f64,
    kernel: Kernel,
) -> Result<SideFit> {
    Ok(SideDesign::new(data, partition, side, p, h, kernel)?.fit(data, variable))
}

/// Same fit as [`fit_side`] obtained by solving the full stacked system at once.
pub fn fit_side_stacked(
    data: &RddDataset,
    partition: &CellPartition,
    variable: Variable,
    side: Side,
    p: usize,
    h: f64,
    kernel: Kernel,
) -> Result<SideFit> {
    SideDesign::new(data, partition, side, p, h, kernel)?;
    let m = partition.m();
    let dim = m * (p + 1);
    let n = partition.n() as f64;
    let values = data.variable(variable);
    let mut gamma = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    for (i, &z) in data.z().iter().enumerate() {
        let Some(j) = partition.cell_of(i) else { continue };
        if !side.contains(z) {
            continue;
        }
        let u = z / h;
        let w = kernel.weight(u) / h;
        if w == 0.0 {
            continue;
        }
        let r = powers(u, p);
        for a in 0..=p {
            rhs[a * m + j] += w * r[a] * values[i] / n;
            for b in 0..=p {
                gamma[(a * m + j, b * m + j)] += w * r[a] * r[b] / n;
            }
        }
    }
    let scaled = gamma.full_piv_lu().solve(&rhs).ok_or(Error::SingularGamma { side })?;
    let coefficients = (0..m).map(|j| (0..=p).map(|v| scaled[v * m + j] / h.powi(v as i32)).collect()).collect();
    Ok(SideFit { side, order: p, bandwidth: h, variable, coefficients })
}

/// Residuals `V_i - mu_V^{side}(cell_i)` around the fitted boundary limits.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    y: Vec<f64>,
    x: Vec<f64>,
}

impl Residuals {
    pub fn from_intercepts(data: &RddDataset, partition: &CellPartition, y: [&[f64]; 2], x: [&[f64]; 2]) -> Self {
        let build = |values: &[f64], lim: [&[f64]; 2]| -> Vec<f64> {
            values
                .iter()
                .zip(data.z())
                .enumerate()
                .map(|(i, (&v, &z))| match partition.cell_of(i) {
                    Some(j) if z >= 0.0 => v - lim[0][j],
                    Some(j) => v - lim[1][j],
                    None => 0.0,
                })
                .collect()
        };
        Self { y: build(data.y(), y), x: build(data.x(), x) }
    }

    pub fn get(&self, v: Variable) -> &[f64] {
        match v {
            Variable::Y => &self.y,
            Variable::X => &self.x,
        }
    }
}

/// Per-cell boundary limits and discontinuities of `Y` and `X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDiscontinuities {
    pub partition: CellPartition,
    pub delta_y: Vec<f64>,
    pub delta_x: Vec<f64>,
    pub mu_y_plus: Vec<f64>,
    pub mu_y_minus: Vec<f64>,
    pub mu_x_plus: Vec<f64>,
    pub mu_x_minus: Vec<f64>,
    pub se_delta_y: Vec<f64>,
    pub se_delta_x: Vec<f64>,
    pub bandwidth: f64,
    pub order: usize,
    pub kernel: Kernel,
}

impl CellDiscontinuities {
    /// Discontinuities supplied directly, without underlying data.
    pub fn from_parts(delta_y: Vec<f64>, delta_x: Vec<f64>, pi_hat: Vec<f64>) -> Result<Self> {
        let m = pi_hat.len();
        if m == 0 || delta_y.len() != m || delta_x.len() != m {
            return Err(Error::InvalidArgument("delta_y, delta_x and pi must be nonempty and of equal length".into()));
        }
        let labels = (0..m).map(|j| j.to_string()).collect();
        let partition = CellPartition::from_shares(labels, pi_hat)?;
        Ok(Self {
            partition,
            mu_y_plus: delta_y.clone(),
            mu_y_minus: vec![0.0; m],
            mu_x_plus: delta_x.clone(),
            mu_x_minus: vec![0.0; m],
            delta_y,
            delta_x,
            se_delta_y: vec![0.0; m],
            se_delta_x: vec![0.0; m],
            bandwidth: f64::NAN,
            order: 1,
            kernel: Kernel::Triangular,
        })
    }

    pub fn m(&self) -> usize {
        self.delta_x.len()
    }

    pub fn pi_hat(&self) -> &[f64] {
        &self.partition.pi_hat
    }

    pub fn delta(&self, v: Variable) -> &[f64] {
        match v {
            Variable::Y => &self.delta_y,
            Variable::X => &self.delta_x,
        }
    }

    pub fn residuals(&self, data: &RddDataset) -> Residuals {
        Residuals::from_intercepts(
            data,
            &self.partition,
            [&self.mu_y_plus, &self.mu_y_minus],
            [&self.mu_x_plus, &self.mu_x_minus],
        )
    }
}

pub fn cell_discontinuities(
    data: &RddDataset,
    partition: &CellPartition,
    p: usize,
    h: f64,
    kernel: Kernel,
) -> Result<CellDiscontinuities> {
    let plus = SideDesign::new(data, partition, Side::Plus, p, h, kernel)?;
    let minus = SideDesign::new(data, partition, Side::Minus, p, h, kernel)?;
    cell_discontinuities_from_designs(data, partition, &plus, &minus)
}

pub(crate) fn cell_discontinuities_from_designs(
    data: &RddDataset,
    partition: &CellPartition,
    plus: &SideDesign,
    minus: &SideDesign,
) -> Result<CellDiscontinuities> {
    let mu_y_plus = plus.fit(data, Variable::Y).intercepts();
    let mu_y_minus = minus.fit(data, Variable::Y).intercepts();
    let mu_x_plus = plus.fit(data, Variable::X).intercepts();
    let mu_x_minus = minus.fit(data, Variable::X).intercepts();
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();

    let residuals = Residuals::from_intercepts(data, partition, [&mu_y_plus, &mu_y_minus], [&mu_x_plus, &mu_x_minus]);
    let m = partition.m();
    let mut var_y = vec![0.0; m];
    let mut var_x = vec![0.0; m];
    for design in [plus, minus] {
        let comps =
            [Component { design, s: 0, variable: Variable::Y }, Component { design, s: 0, variable: Variable::X }];
        for (j, cov) in component_covariance(&residuals, &comps).iter().enumerate() {
            var_y[j] += cov[(0, 0)];
            var_x[j] += cov[(1, 1)];
        }
    }

    Ok(CellDiscontinuities {
        partition: partition.clone(),
        delta_y: diff(&mu_y_plus, &mu_y_minus),
        delta_x: diff(&mu_x_plus, &mu_x_minus),
        mu_y_plus,
        mu_y_minus,
        mu_x_plus,
        mu_x_minus,
        se_delta_y: var_y.into_iter().map(f64::sqrt).collect(),
        se_delta_x: var_x.into_iter().map(f64::sqrt).collect(),
        bandwidth: plus.bandwidth,
        order: plus.order,
        kernel: plus.kernel,
    })
}

/// Stacked `Γ_{±,p}(h)` and `ϑ_{p,q}^±(h)` in the rescaled basis.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMatrices {
    pub p: usize,
    pub q: usize,
    pub h: f64,
    pub m: usize,
    pub gamma_plus: DMatrix<f64>,
    pub gamma_minus: DMatrix<f64>,
    pub vartheta_plus: DMatrix<f64>,
    pub vartheta_minus: DMatrix<f64>,
}

pub fn moment_matrices(
    data: &RddDataset,
    partition: &CellPartition,
    p: usize,
    q: usize,
    h: f64,
    kernel: Kernel,
) -> MomentMatrices {
    let m = partition.m();
    let dim = m * (p + 1);
    let n = partition.n() as f64;
    let mut gp = DMatrix::<f64>::zeros(dim, dim);
    let mut gm = DMatrix::<f64>::zeros(dim, dim);
    let mut vp = DMatrix::<f64>::zeros(dim, m);
    let mut vm = DMatrix::<f64>::zeros(dim, m);
    for (i, &z) in data.z().iter().enumerate() {
        let Some(j) = partition.cell_of(i) else { continue };
        let u = z / h;
        let w = kernel.weight(u) / h;
        if w == 0.0 {
            continue;
        }
        let (g, v) = if z >= 0.0 { (&mut gp, &mut vp) } else { (&mut gm, &mut vm) };
        let r = powers(u, p);
        let uq = u.powi(q as i32);
        for a in 0..=p {
            v[(a * m + j, j)] += w * r[a] * uq / n;
            for b in 0..=p {
                g[(a * m + j, b * m + j)] += w * r[a] * r[b] / n;
            }
        }
    }
    MomentMatrices { p, q, h, m, gamma_plus: gp, gamma_minus: gm, vartheta_plus: vp, vartheta_minus: vm }
}

/// `𝓑_{s,p,q}^±` for every cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasConstants {
    pub s: usize,
    pub l: usize,
    pub q: usize,
    pub b_plus: Vec<f64>,
    pub b_minus: Vec<f64>,
}

pub fn bias_constants(mom: &MomentMatrices, s: usize) -> Result<BiasConstants> {
    if s > mom.p {
        return Err(Error::InvalidArgument(format!("derivative order {s} exceeds polynomial order {}", mom.p)));
    }
    let one_side = |gamma: &DMatrix<f64>, vartheta: &DMatrix<f64>, side| -> Result<Vec<f64>> {
        let sol = gamma.clone().full_piv_lu().solve(vartheta).ok_or(Error::SingularGamma { side })?;
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularGamma { side });
        }
        Ok((0..mom.m).map(|j| factorial(s) * sol[(s * mom.m + j, j)]).collect())
    };
    Ok(BiasConstants {
        s,
        l: mom.p,
        q: mom.q,
        b_plus: one_side(&mom.gamma_plus, &mom.vartheta_plus, Side::Plus)?,
        b_minus: one_side(&mom.gamma_minus, &mom.vartheta_minus, Side::Minus)?,
    })
}

/// Selects one `Ψ̂_{UV,p,q}^{side}(h, b)` matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiSpec {
    pub u: Variable,
    pub v: Variable,
    pub p: usize,
    pub q: usize,
    pub h: f64,
    pub b: f64,
    pub side: Side,
}

/// Stacked `Ψ̂` of size `m(p+1) × m(q+1)` built from plug-in residuals.
pub fn residual_psi(
    data: &RddDataset,
    partition: &CellPartition,
    residuals: &Residuals,
    kernel: Kernel,
    spec: &PsiSpec,
) -> DMatrix<f64> {
    let m = partition.m();
    let n = partition.n() as f64;
    let (eu, ev) = (residuals.get(spec.u), residuals.get(spec.v));
    let mut psi = DMatrix::<f64>::zeros(m * (spec.p + 1), m * (spec.q + 1));
    for (i, &z) in data.z().iter().enumerate() {
        let Some(j) = partition.cell_of(i) else { continue };
        if !spec.side.contains(z) {
            continue;
        }
        let wh = kernel.weight(z / spec.h) / spec.h;
        let wb = kernel.weight(z / spec.b) / spec.b;
        if wh == 0.0 || wb == 0.0 {
            continue;
        }
        let ra = powers(z / spec.h, spec.p);
        let rb = powers(z / spec.b, spec.q);
        let scale = wh * wb * eu[i] * ev[i] / n;
        for a in 0..=spec.p {
            for b in 0..=spec.q {
                psi[(a * m + j, b * m + j)] += scale * ra[a] * rb[b];
            }
        }
    }
    psi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::build_partition;
    use approx::assert_abs_diff_eq;

    fn dataset(z: &[f64], y: &[f64], cells: &[&str]) -> RddDataset {
        RddDataset::new(y.to_vec(), vec![0.0; z.len()], z.to_vec(), cells.iter().map(|s| s.to_string()).collect(), 0.0)
            .unwrap()
    }

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| -1.0 + 2.0 * (i as f64 + 0.5) / n as f64).collect()
    }

    #[test]
    fn linear_data_is_reproduced() {
        let z = grid(40);
        let y: Vec<f64> = z.iter().map(|z| 3.0 + 2.0 * z).collect();
        let d = dataset(&z, &y, &["a"; 40]);
        let part = build_partition(&d, 5).unwrap();
        let fit = fit_side(&d, &part, Variable::Y, Side::Plus, 1, 0.7, Kernel::Triangular).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0][0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.coefficients[0][1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn three_point_closed_form() {
        let z = [0.1, 0.2, 0.3, -0.1, -0.2, -0.3];
        let y = [1.0, 2.0, 3.0, 0.0, 0.0, 0.0];
        let d = dataset(&z, &y, &["a"; 6]);
        let part = build_partition(&d, 3).unwrap();
        let fit = fit_side(&d, &part, Variable::Y, Side::Plus, 1, 1.0, Kernel::Uniform).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0][0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.coefficients[0][1], 10.0, epsilon = 1e-12);
    }

    #[test]
    fn insufficient_support_is_reported() {
        let z = [0.1, 2.0, 3.0, -0.1, -0.2, -0.3];
        let d = dataset(&z, &[0.0; 6], &["a"; 6]);
        let part = build_partition(&d, 3).unwrap();
        let err = SideDesign::new(&d, &part, Side::Plus, 1, 1.0, Kernel::Uniform).unwrap_err();
        assert!(matches!(err, Error::InsufficientSupport { available: 1, needed: 2, .. }));
    }

    #[test]
    fn coincident_points_are_singular() {
        let z = [0.5, 0.5, 0.5, -0.1, -0.2, -0.3];
        let d = dataset(&z, &[0.0; 6], &["a"; 6]);
        let part = build_partition(&d, 3).unwrap();
        let err = SideDesign::new(&d, &part, Side::Plus, 1, 1.0, Kernel::Uniform).unwrap_err();
        assert!(matches!(err, Error::SingularDesign { .. }));
    }

    #[test]
    fn step_functions_give_unit_jumps() {
        let z = grid(60);
        let step: Vec<f64> = z.iter().map(|&z| if z >= 0.0 { 1.0 } else { 0.0 }).collect();
        let cells: Vec<String> = (0..60).map(|i| (i % 3).to_string()).collect();
        let d = RddDataset::new(step.clone(), step, z, cells, 0.0).unwrap();
        let part = build_partition(&d, 5).unwrap();
        let cd = cell_discontinuities(&d, &part, 1, 0.8, Kernel::Triangular).unwrap();
        for j in 0..3 {
            assert_abs_diff_eq!(cd.delta_y[j], 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(cd.delta_x[j], 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(cd.se_delta_y[j], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn gamma_has_no_cross_cell_blocks() {
        let z = grid(50);
        let cells: Vec<&str> = (0..50).map(|i| if i % 2 == 0 { "a" } else { "b" }).collect();
        let d = dataset(&z, &z, &cells);
        let part = build_partition(&d, 5).unwrap();
        let mom = moment_matrices(&d, &part, 1, 2, 0.9, Kernel::Triangular);
        for (a, b) in [(0, 1), (0, 3), (2, 1), (2, 3)] {
            assert_eq!(mom.gamma_plus[(a, b)], 0.0);
            assert_eq!(mom.gamma_minus[(b, a)], 0.0);
        }
    }

    #[test]
    fn empty_minus_side_gives_zero_gamma() {
        let z: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let d = dataset(&z, &z, &["a"; 10]);
        let part = build_partition(&d, 0).unwrap();
        let mom = moment_matrices(&d, &part, 1, 2, 1.0, Kernel::Uniform);
        assert!(mom.gamma_minus.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_gamma_returns_vartheta_entry() {
        let mom = MomentMatrices {
            p: 1,
            q: 2,
            h: 1.0,
            m: 1,
            gamma_plus: DMatrix::identity(2, 2),
            gamma_minus: DMatrix::identity(2, 2),
            vartheta_plus: DMatrix::from_column_slice(2, 1, &[0.7, 0.0]),
            vartheta_minus: DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
        };
        let bc = bias_constants(&mom, 0).unwrap();
        assert_eq!(bc.b_plus, vec![0.7]);
        assert_eq!(bc.b_minus, vec![0.0]);
    }

    #[test]
    fn mirrored_design_has_equal_even_bias_constants() {
        let z = grid(200);
        let d = dataset(&z, &z, &["a"; 200]);
        let part = build_partition(&d, 5).unwrap();
        let mom = moment_matrices(&d, &part, 1, 2, 0.8, Kernel::Triangular);
        let bc = bias_constants(&mom, 0).unwrap();
        assert_abs_diff_eq!(bc.b_plus[0], bc.b_minus[0], epsilon = 1e-12);
        let mom3 = moment_matrices(&d, &part, 1, 3, 0.8, Kernel::Triangular);
        let bc3 = bias_constants(&mom3, 0).unwrap();
        assert_abs_diff_eq!(bc3.b_plus[0], -bc3.b_minus[0], epsilon = 1e-12);
    }

    #[test]
    fn design_bias_constants_match_stacked() {
        let z = grid(120);
        let cells: Vec<&str> = (0..120).map(|i| ["a", "b", "c"][i % 3]).collect();
        let d = dataset(&z, &z, &cells);
        let part = build_partition(&d, 5).unwrap();
        let mom = moment_matrices(&d, &part, 2, 3, 0.6, Kernel::Uniform);
        let stacked = bias_constants(&mom, 2).unwrap();
        let plus = SideDesign::new(&d, &part, Side::Plus, 2, 0.6, Kernel::Uniform).unwrap();
        let minus = SideDesign::new(&d, &part, Side::Minus, 2, 0.6, Kernel::Uniform).unwrap();
        for j in 0..3 {
            assert_abs_diff_eq!(plus.bias_constants(2, 3)[j], stacked.b_plus[j], epsilon = 1e-9);
            assert_abs_diff_eq!(minus.bias_constants(2, 3)[j], stacked.b_minus[j], epsilon = 1e-9);
        }
    }

    #[test]
    fn covariance_matches_stacked_sandwich() {
        let z = grid(90);
        let y: Vec<f64> = z.iter().enumerate().map(|(i, z)| z + ((i * 7919) % 13) as f64 / 13.0).collect();
        let cells: Vec<&str> = (0..90).map(|i| if i % 2 == 0 { "a" } else { "b" }).collect();
        let d = dataset(&z, &y, &cells);
        let part = build_partition(&d, 5).unwrap();
        let (h, b) = (0.5, 0.9);
        let k = Kernel::Triangular;
        let cd = cell_discontinuities(&d, &part, 1, h, k).unwrap();
        let res = cd.residuals(&d);
        let d1 = SideDesign::new(&d, &part, Side::Plus, 1, h, k).unwrap();
        let d2 = SideDesign::new(&d, &part, Side::Plus, 2, b, k).unwrap();
        let comps = [
            Component { design: &d1, s: 0, variable: Variable::Y },
            Component { design: &d2, s: 2, variable: Variable::Y },
        ];
        let cov = component_covariance(&res, &comps);

        let m1 = moment_matrices(&d, &part, 1, 2, h, k);
        let m2 = moment_matrices(&d, &part, 2, 3, b, k);
        let g1 = m1.gamma_plus.try_inverse().unwrap();
        let g2 = m2.gamma_plus.try_inverse().unwrap();
        let spec = PsiSpec { u: Variable::Y, v: Variable::Y, p: 1, q: 2, h, b, side: Side::Plus };
        let psi = residual_psi(&d, &part, &res, k, &spec);
        let n = part.n() as f64;
        for (j, cov_j) in cov.iter().enumerate().take(2) {
            let e0 = g1.row(j).transpose();
            let e2 = g2.row(2 * 2 + j).transpose();
            let expected = (e0.transpose() * &psi * e2)[0] / n / (b * b);
            assert_abs_diff_eq!(cov_j[(0, 1)], expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn psi_is_symmetric_psd() {
        let z = grid(80);
        let y: Vec<f64> = (0..80).map(|i| ((i * 37) % 11) as f64).collect();
        let d = dataset(&z, &y, &["a"; 80]);
        let part = build_partition(&d, 5).unwrap();
        let cd = cell_discontinuities(&d, &part, 1, 0.7, Kernel::Uniform).unwrap();
        let res = cd.residuals(&d);
        let spec = PsiSpec { u: Variable::Y, v: Variable::Y, p: 2, q: 2, h: 0.7, b: 0.7, side: Side::Minus };
        let psi = residual_psi(&d, &part, &res, Kernel::Uniform, &spec);
        assert_abs_diff_eq!((&psi - psi.transpose()).abs().max(), 0.0, epsilon = 1e-14);
        assert!(psi.symmetric_eigenvalues().min() > -1e-12);
    }
}
