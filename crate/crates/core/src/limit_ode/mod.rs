//! Deterministic limit and fluctuation systems for the two-layer network.
//!
//! All systems are linear with the constant matrix A and are integrated by
//! classical RK4 on a uniform grid. Path integrals of l and L use the
//! cumulative trapezoid rule on the same grid, so every quantity lives on
//! shared grid points and different formulations can be compared exactly.

mod expansion;
mod problem;

use std::path::Path as FsPath;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub use expansion::{expansion_recursion, reconstruct, ExpansionEngine, ExpansionState};
pub use problem::{KernelPaths, LimitProblem};

/// Highest window index the expansion engine accepts.
pub const MAX_EXPANSION_ORDER: usize = 3;

/// Tolerance for snapping γ₂ onto a window edge.
const EDGE_TOL: f64 = 1e-9;

/// A scalar path on the grid.
pub type Path = Vec<f64>;

/// Where γ₂ sits among the expansion windows [(2ν-1)/2ν, (2ν+1)/(2ν+2)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeInfo {
    pub gamma2: f64,
    pub nu: usize,
    /// min(1-γ₂, γ₂-1/2), the order of the leading correction.
    pub exponent: f64,
    /// γ₂ is the left edge of its window.
    pub boundary: bool,
}

impl RegimeInfo {
    /// Index of the Gaussian term in the network expansion.
    ///
    /// At a window edge the Gaussian initial value merges with the last
    /// deterministic correction, so one order fewer is needed.
    pub fn expansion_order(&self) -> usize {
        if self.boundary {
            self.nu - 1
        } else {
            self.nu
        }
    }

    /// K follows the forced equation (γ₂ ≥ 3/4) rather than pure decay.
    pub fn k_forced(&self) -> bool {
        self.gamma2 >= 0.75 - EDGE_TOL
    }

    /// Ψ follows the forced equation (γ₂ ≥ 5/6).
    pub fn psi_forced(&self) -> bool {
        self.gamma2 >= 5.0 / 6.0 - EDGE_TOL
    }
}

pub fn classify_regime(gamma2: f64) -> Result<RegimeInfo> {
    if !(gamma2 > 0.5 && gamma2 < 1.0) {
        return Err(Error::domain(format!("gamma2 = {gamma2} must lie in (1/2,1) for the expansion")));
    }
    // γ₂ ≥ (2ν-1)/2ν  ⇔  ν ≤ 1/(2(1-γ₂)).
    let r = 1.0 / (2.0 * (1.0 - gamma2));
    let nu = (r + EDGE_TOL).floor().max(1.0) as usize;
    let boundary = nu > 1 && (r - nu as f64).abs() < EDGE_TOL;
    Ok(RegimeInfo { gamma2, nu, exponent: (1.0 - gamma2).min(gamma2 - 0.5), boundary })
}

/// Uniform time grid t_i = iΔt, i = 0..=steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub dt: f64,
    pub steps: usize,
}

impl Grid {
    /// Grid over [0, horizon]; the horizon must be a whole number of steps.
    pub fn new(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) || !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(Error::domain(format!("invalid grid: T = {horizon}, dt = {dt}")));
        }
        let steps = (horizon / dt).round();
        if (steps * dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
            return Err(Error::domain(format!("T = {horizon} is not a multiple of dt = {dt}")));
        }
        Ok(Grid { dt, steps: steps as usize })
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.t(self.steps)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.t(i)).collect()
    }

    /// Index of the grid point nearest to t.
    pub fn index_of(&self, t: f64) -> usize {
        ((t / self.dt).round().max(0.0) as usize).min(self.steps)
    }
}

/// An M-vector path on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeState {
    pub grid: Grid,
    /// `values[i][x]` at time t_i.
    pub values: Vec<Vec<f64>>,
}

impl OdeState {
    pub fn zeros(grid: Grid, m: usize) -> Self {
        OdeState { grid, values: vec![vec![0.0; m]; grid.len()] }
    }

    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn at(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn last(&self) -> &[f64] {
        self.values.last().expect("grid has at least one point")
    }

    /// Path of one component.
    pub fn component(&self, x: usize) -> Path {
        self.values.iter().map(|v| v[x]).collect()
    }

    /// max over grid and components of |self - other|.
    pub fn sup_diff(&self, other: &OdeState) -> f64 {
        self.values.iter().zip(&other.values).flat_map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v).abs())).fold(0.0, f64::max)
    }

    /// max over the grid of the Euclidean norm.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| norm(v)).fold(0.0, f64::max)
    }

    /// CSV with header `t,x0,x1,...`.
    pub fn write_csv(&self, path: &FsPath) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string()];
        header.extend((0..self.dim()).map(|x| format!("x{x}")));
        w.write_record(&header)?;
        for (i, v) in self.values.iter().enumerate() {
            let mut row = vec![self.grid.t(i).to_string()];
            row.extend(v.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// ∫₀^{t_i} g ds for every grid point, trapezoid rule.
pub fn cumulative_trapezoid(g: &[f64], dt: f64) -> Path {
    let mut out = Vec::with_capacity(g.len());
    let mut acc = 0.0;
    for (i, v) in g.iter().enumerate() {
        if i > 0 {
            acc += 0.5 * dt * (g[i - 1] + v);
        }
        out.push(acc);
    }
    out
}

/// RK4 for dQ/dt = F(t) - (1/M) A Q, with F given on the grid and linearly
/// interpolated at half steps. `forcing = None` means F ≡ 0.
pub fn integrate_linear(a: &DMatrix<f64>, init: &[f64], forcing: Option<&[Vec<f64>]>, grid: Grid) -> Result<OdeState> {
    let m = a.nrows();
    if a.ncols() != m || init.len() != m {
        return Err(Error::shape(format!("A is {}x{}, initial value has {} entries", m, a.ncols(), init.len())));
    }
    if let Some(f) = forcing {
        if f.len() != grid.len() || f.iter().any(|v| v.len() != m) {
            return Err(Error::shape("forcing does not match the grid"));
        }
    }
    let b = a / m as f64;
    let rhs =
        |q: &[f64], f: Option<&[f64]>| -> Vec<f64> { (0..m).map(|x| f.map_or(0.0, |f| f[x]) - (0..m).map(|xp| b[(x, xp)] * q[xp]).sum::<f64>()).collect() };
    let axpy = |q: &[f64], k: &[f64], s: f64| -> Vec<f64> { q.iter().zip(k).map(|(u, v)| u + s * v).collect() };
    let dt = grid.dt;
    let mut values = Vec::with_capacity(grid.len());
    values.push(init.to_vec());
    for i in 0..grid.steps {
        let q = &values[i];
        let (f0, f1) = (forcing.map(|f| f[i].as_slice()), forcing.map(|f| f[i + 1].as_slice()));
        let fm: Option<Vec<f64>> = forcing.map(|f| f[i].iter().zip(&f[i + 1]).map(|(u, v)| 0.5 * (u + v)).collect());
        let k1 = rhs(q, f0);
        let k2 = rhs(&axpy(q, &k1, 0.5 * dt), fm.as_deref());
        let k3 = rhs(&axpy(q, &k2, 0.5 * dt), fm.as_deref());
        let k4 = rhs(&axpy(q, &k3, dt), f1);
        let next: Vec<f64> = (0..m).map(|x| q[x] + dt / 6.0 * (k1[x] + 2.0 * k2[x] + 2.0 * k3[x] + k4[x])).collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { group: "ode".into(), step: i + 1 });
        }
        values.push(next);
    }
    Ok(OdeState { grid, values })
}

/// dh/dt(x) = (1/M) Σ_{x'} (y(x') - h(x')) A_{x,x'}.
pub fn integrate_h(a: &DMatrix<f64>, y: &[f64], h0: &[f64], grid: Grid) -> Result<OdeState> {
    let m = a.nrows();
    if y.len() != m {
        return Err(Error::shape(format!("{} targets for a {m}x{m} kernel", y.len())));
    }
    let f: Vec<f64> = (0..m).map(|x| (0..m).map(|xp| a[(x, xp)] * y[xp]).sum::<f64>() / m as f64).collect();
    let forcing = vec![f; grid.len()];
    integrate_linear(a, h0, Some(&forcing), grid)
}

/// K in either case: pure decay below 3/4, forced at and above it.
pub fn integrate_k(regime: &RegimeInfo, a: &DMatrix<f64>, forcing: Option<&[Vec<f64>]>, k0: &[f64], grid: Grid) -> Result<OdeState> {
    match (regime.k_forced(), forcing.is_some()) {
        (true, false) => Err(Error::domain(format!("gamma2 = {} needs the forced K equation", regime.gamma2))),
        (false, true) => Err(Error::domain(format!("gamma2 = {} has no forcing in the K equation", regime.gamma2))),
        _ => integrate_linear(a, k0, forcing, grid),
    }
}

/// Ψ in either case: pure decay on (3/4, 5/6), forced from 5/6 on.
pub fn integrate_psi(regime: &RegimeInfo, a: &DMatrix<f64>, forcing: Option<&[Vec<f64>]>, psi0: &[f64], grid: Grid) -> Result<OdeState> {
    if regime.gamma2 <= 0.75 + EDGE_TOL {
        return Err(Error::domain(format!("the second-order fluctuation needs gamma2 > 3/4, got {}", regime.gamma2)));
    }
    match (regime.psi_forced(), forcing.is_some()) {
        (true, false) => Err(Error::domain(format!("gamma2 = {} needs the forced Psi equation", regime.gamma2))),
        (false, true) => Err(Error::domain(format!("gamma2 = {} has no forcing in the Psi equation", regime.gamma2))),
        _ => integrate_linear(a, psi0, forcing, grid),
    }
}

/// Errors of the scalar closed forms at t = 1 with M = 1, A = 2, y = 1, dt = 1e-3:
/// |h_1 - (1 - e^{-2})| from h₀ = 0 and |K_1 - e^{-2}| for the unforced K from K₀ = 1.
pub fn closed_form_errors() -> Result<(f64, f64)> {
    let a = DMatrix::from_element(1, 1, 2.0);
    let grid = Grid::new(1.0, 1e-3)?;
    let h = integrate_h(&a, &[1.0], &[0.0], grid)?;
    let k = integrate_k(&classify_regime(0.6)?, &a, None, &[1.0], grid)?;
    let e = (-2.0f64).exp();
    Ok(((h.last()[0] - (1.0 - e)).abs(), (k.last()[0] - e).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn regime_examples() {
        let r = classify_regime(0.6).unwrap();
        assert_eq!((r.nu, r.boundary), (1, false));
        assert!((r.exponent - 0.1).abs() < 1e-15);
        let r = classify_regime(0.8).unwrap();
        assert_eq!((r.nu, r.boundary), (2, false));
        assert!((r.exponent - 0.2).abs() < 1e-15);
        let r = classify_regime(0.75).unwrap();
        assert_eq!((r.nu, r.boundary, r.expansion_order()), (2, true, 1));
        let r = classify_regime(5.0 / 6.0).unwrap();
        assert_eq!((r.nu, r.boundary), (3, true));
        let r = classify_regime(6.0 / 7.0).unwrap();
        assert_eq!((r.nu, r.boundary, r.expansion_order()), (3, false, 3));
        for g in [0.5, 1.0, 0.3, f64::NAN] {
            assert!(classify_regime(g).is_err());
        }
    }

    #[test]
    fn windows_partition_the_interval() {
        for i in 1..1000 {
            let g = 0.5 + 0.5 * i as f64 / 1000.0;
            let r = classify_regime(g).unwrap();
            let nu = r.nu as f64;
            assert!(g >= (2.0 * nu - 1.0) / (2.0 * nu) - 1e-12 && g < (2.0 * nu + 1.0) / (2.0 * nu + 2.0));
            assert!(r.exponent > 0.0 && r.exponent <= 0.5);
        }
    }

    #[test]
    fn grid_rejects_ragged_horizon() {
        assert_eq!(Grid::new(1.0, 1e-3).unwrap().steps, 1000);
        assert!(Grid::new(1.0, 0.3).is_err());
        assert!(Grid::new(1.0, 0.0).is_err());
        assert_eq!(Grid::new(0.0, 0.1).unwrap().len(), 1);
    }

    #[test]
    fn closed_form_report() {
        let (eh, ek) = closed_form_errors().unwrap();
        assert!(eh < 1e-12 && ek < 1e-12, "{eh} {ek}");
    }

    #[test]
    fn scalar_closed_forms() {
        let grid = Grid::new(1.0, 1e-3).unwrap();
        let h = integrate_h(&scalar(2.0), &[1.0], &[0.0], grid).unwrap();
        assert_eq!(h.at(0), &[0.0]);
        assert!((h.last()[0] - (1.0 - (-2.0f64).exp())).abs() < 1e-12);
        let r = classify_regime(0.6).unwrap();
        let k = integrate_k(&r, &scalar(2.0), None, &[1.0], grid).unwrap();
        assert!((k.last()[0] - (-2.0f64).exp()).abs() < 1e-12);
        let zero = integrate_k(&r, &scalar(2.0), None, &[0.0], grid).unwrap();
        assert!(zero.values.iter().all(|v| v[0] == 0.0));
        let r = classify_regime(0.8).unwrap();
        let psi = integrate_psi(&r, &scalar(2.0), None, &[0.5], grid).unwrap();
        assert!((psi.last()[0] - 0.5 * (-2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn case_mismatch_is_an_error() {
        let grid = Grid::new(0.1, 0.01).unwrap();
        let f = vec![vec![0.0]; grid.len()];
        let a = scalar(1.0);
        assert!(integrate_k(&classify_regime(0.6).unwrap(), &a, Some(&f), &[0.0], grid).is_err());
        assert!(integrate_k(&classify_regime(0.8).unwrap(), &a, None, &[0.0], grid).is_err());
        assert!(integrate_psi(&classify_regime(0.7).unwrap(), &a, None, &[0.0], grid).is_err());
        assert!(integrate_psi(&classify_regime(0.9).unwrap(), &a, None, &[0.0], grid).is_err());
    }

    /// Explicit Euler at a far finer step as the oracle for a 3×3 system.
    #[test]
    fn rk4_matches_fine_euler() {
        let a = DMatrix::from_row_slice(3, 3, &[1.2, 0.3, -0.1, 0.3, 0.9, 0.2, -0.1, 0.2, 1.5]);
        let y = [0.5, -0.4, 0.9];
        let grid = Grid::new(1.0, 1e-3).unwrap();
        let h = integrate_h(&a, &y, &[0.0; 3], grid).unwrap();
        let n = 1_000_000;
        let dt = 1.0 / n as f64;
        let mut e = [0.0f64; 3];
        let mut sup: f64 = 0.0;
        for step in 1..=n {
            let d: Vec<f64> = (0..3).map(|x| (0..3).map(|xp| a[(x, xp)] * (y[xp] - e[xp])).sum::<f64>() / 3.0).collect();
            for x in 0..3 {
                e[x] += dt * d[x];
            }
            if step % 1000 == 0 {
                let i = step / 1000;
                sup = sup.max((0..3).map(|x| (e[x] - h.at(i)[x]).abs()).fold(0.0, f64::max));
            }
        }
        assert!(sup < 1e-6, "sup diff {sup}");
    }

    #[test]
    fn rk4_order() {
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let y = [1.0, -1.0];
        let exact = integrate_h(&a, &y, &[0.0; 2], Grid::new(2.0, 0.0025).unwrap()).unwrap();
        let err = |dt: f64| {
            let h = integrate_h(&a, &y, &[0.0; 2], Grid::new(2.0, dt).unwrap()).unwrap();
            (0..2).map(|x| (h.last()[x] - exact.last()[x]).abs()).fold(0.0, f64::max)
        };
        let ratio = err(0.2) / err(0.1);
        assert!(ratio >= 12.0, "ratio {ratio}");
    }

    #[test]
    fn trapezoid_is_exact_on_lines() {
        let g: Vec<f64> = (0..11).map(|i| 2.0 * i as f64 * 0.1).collect();
        let c = cumulative_trapezoid(&g, 0.1);
        assert_eq!(c[0], 0.0);
        assert!((c[10] - 1.0).abs() < 1e-14);
    }
}
