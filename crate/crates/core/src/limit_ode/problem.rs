//! The limit problem on a dataset and the closed-form systems for h, l, K, L and Ψ.

use nalgebra::DMatrix;

use super::{cumulative_trapezoid, integrate_h, integrate_k, integrate_psi, Grid, OdeState, Path, RegimeInfo};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{assemble_a, gaussian_covariance, kernel_b, sample_gaussian, KernelContext, KernelSpec, KernelTables, TestFunction};
use crate::law::InitLaw;

/// Scalar paths for every kernel entry, indexed like [`KernelTables`].
#[derive(Debug, Clone, PartialEq)]
pub struct KernelPaths {
    pub m: usize,
    pub n1: usize,
    pub b1: Vec<Path>,
    pub b2: Vec<Path>,
    pub b3: Vec<Path>,
}

impl KernelPaths {
    pub fn b1(&self, x: usize, xp: usize) -> &Path {
        &self.b1[x * self.m + xp]
    }

    pub fn b2(&self, j: usize, x: usize, xp: usize) -> &Path {
        &self.b2[(j * self.m + x) * self.m + xp]
    }

    pub fn b3(&self, j: usize, x: usize) -> &Path {
        &self.b3[j * self.m + x]
    }

    fn from_flat(m: usize, n1: usize, mut paths: Vec<Path>) -> Self {
        let b3 = paths.split_off(m * m + n1 * m * m);
        let b2 = paths.split_off(m * m);
        KernelPaths { m, n1, b1: paths, b2, b3 }
    }

    /// Largest entry-wise difference over all kernels and grid points.
    pub fn sup_diff(&self, other: &KernelPaths) -> f64 {
        let pairs = self.b1.iter().zip(&other.b1).chain(self.b2.iter().zip(&other.b2)).chain(self.b3.iter().zip(&other.b3));
        pairs.flat_map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v).abs())).fold(0.0, f64::max)
    }
}

/// Dataset, law and kernel data shared by every limit system.
#[derive(Debug, Clone)]
pub struct LimitProblem {
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<f64>,
    pub ctx: KernelContext,
    pub tables: KernelTables,
    pub a: DMatrix<f64>,
    pub grid: Grid,
    /// ⟨C³ʲ_{x'}⟩ for each data point x'.
    c3_means: Vec<Vec<f64>>,
}

impl LimitProblem {
    pub fn new(dataset: &Dataset, law: InitLaw, spec: KernelSpec, grid: Grid) -> Result<Self> {
        Self::from_parts(dataset.xs.clone(), dataset.ys()?.to_vec(), law, spec, grid)
    }

    pub fn from_parts(xs: Vec<Vec<f64>>, ys: Vec<f64>, law: InitLaw, spec: KernelSpec, grid: Grid) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::shape(format!("{} inputs and {} targets", xs.len(), ys.len())));
        }
        let tables = kernel_b(&xs, &law, &spec)?;
        let a = assemble_a(&tables);
        let ctx = KernelContext::new(spec, law);
        let c3_means = xs.iter().map(|x| ctx.c3_means(x)).collect::<Result<_>>()?;
        Ok(LimitProblem { xs, ys, ctx, tables, a, grid, c3_means })
    }

    pub fn m(&self) -> usize {
        self.xs.len()
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.ctx.spec
    }

    pub fn c3_means(&self, xp: usize) -> &[f64] {
        &self.c3_means[xp]
    }

    /// h from h₀ = 0.
    pub fn h(&self) -> Result<OdeState> {
        integrate_h(&self.a, &self.ys, &vec![0.0; self.m()], self.grid)
    }

    /// One joint draw of 𝒢(x) over the dataset.
    pub fn gaussian_init(&self, seed: u64) -> Result<Vec<f64>> {
        let cov = gaussian_covariance(&self.xs, &self.ctx.law, &self.ctx.spec)?;
        Ok(sample_gaussian(&cov, seed))
    }

    /// (y(x') - h_s(x')) on the grid.
    pub fn residuals(&self, h: &OdeState) -> Vec<Vec<f64>> {
        h.values.iter().map(|v| self.ys.iter().zip(v).map(|(y, h)| y - h).collect()).collect()
    }

    /// B kernels in [`KernelPaths`] order.
    pub fn kernel_functions(&self) -> Vec<TestFunction> {
        let spec = self.spec();
        let mut fs = Vec::new();
        for x in &self.xs {
            for xp in &self.xs {
                fs.push(spec.b1(x, xp));
            }
        }
        for j in 0..spec.n1 {
            for x in &self.xs {
                for xp in &self.xs {
                    fs.push(spec.b2(j, x, xp));
                }
            }
        }
        for j in 0..spec.n1 {
            for x in &self.xs {
                fs.push(spec.b3(j, x));
            }
        }
        fs
    }

    /// l_t(f) = ∫₀ᵗ (1/M) Σ_{x'} (y - h_s(x')) ⟨C^{N₁,f}_{x'}⟩ ds.
    pub fn integrate_l(&self, f: &TestFunction, h: &OdeState) -> Result<Path> {
        if f.as_const().is_some() {
            return Ok(vec![0.0; self.grid.len()]);
        }
        let ops = (0..self.m()).map(|xp| self.spec().operator_c_with(f, &self.xs[xp], &self.c3_means[xp])).collect::<Result<Vec<_>>>()?;
        let means = self.ctx.means(&ops)?;
        let m = self.m() as f64;
        let g: Vec<f64> = self.residuals(h).iter().map(|r| r.iter().zip(&means).map(|(r, c)| r * c).sum::<f64>() / m).collect();
        Ok(cumulative_trapezoid(&g, self.grid.dt))
    }

    pub fn kernel_l_paths(&self, h: &OdeState) -> Result<KernelPaths> {
        let paths = self.kernel_functions().iter().map(|f| self.integrate_l(f, h)).collect::<Result<Vec<_>>>()?;
        Ok(KernelPaths::from_flat(self.m(), self.spec().n1, paths))
    }

    /// Averaged kernel bracket l(B¹) + (1/N₁)Σ_j [l(B²ʲ) + x·x'(l(B³ʲ_x)⟨B³ʲ_{x'}⟩ + ⟨B³ʲ_x⟩l(B³ʲ_{x'}))] at grid point i.
    fn linearized_kernel(&self, p: &KernelPaths, i: usize, x: usize, xp: usize) -> f64 {
        let t = &self.tables;
        let n1 = t.n1;
        let mut s = 0.0;
        for j in 0..n1 {
            s += p.b2(j, x, xp)[i] + t.inner(x, xp) * (p.b3(j, x)[i] * t.b3(j, xp) + t.b3(j, x) * p.b3(j, xp)[i]);
        }
        p.b1(x, xp)[i] + s / n1 as f64
    }

    /// Forcing of the K equation for γ₂ ≥ 3/4.
    pub fn k_forcing(&self, h: &OdeState, lp: &KernelPaths) -> Vec<Vec<f64>> {
        let m = self.m();
        let res = self.residuals(h);
        (0..self.grid.len())
            .map(|i| (0..m).map(|x| (0..m).map(|xp| res[i][xp] * self.linearized_kernel(lp, i, x, xp)).sum::<f64>() / m as f64).collect())
            .collect()
    }

    /// K with the case chosen by the regime; `lp` is required from γ₂ = 3/4 on.
    pub fn integrate_k(&self, regime: &RegimeInfo, h: &OdeState, lp: Option<&KernelPaths>, k0: &[f64]) -> Result<OdeState> {
        let forcing = lp.map(|lp| self.k_forcing(h, lp));
        integrate_k(regime, &self.a, forcing.as_deref(), k0, self.grid)
    }

    /// L_t(f): the five integrals of the second-order measure correction.
    pub fn integrate_big_l(&self, f: &TestFunction, h: &OdeState, k: &OdeState) -> Result<Path> {
        let n = self.grid.len();
        if f.as_const().is_some() {
            return Ok(vec![0.0; n]);
        }
        let spec = self.spec();
        let kappa = spec.kappa();
        let m = self.m();
        let res = self.residuals(h);
        let mut g = vec![0.0; n];
        for xp in 0..m {
            let x = &self.xs[xp];
            let means = &self.c3_means[xp];
            let (cf1, cf2, c3) = spec.operators(f, x)?;
            let d: Vec<TestFunction> = (0..spec.n1).map(|j| spec.grad_w1_dot(f, j, x)).collect::<Result<_>>()?;
            let t1 = self.integrate_l(&cf1, h)?;
            let t2 = self.integrate_l(&cf2, h)?;
            let inner = TestFunction::sum(d.iter().zip(means).map(|(dj, mj)| dj.scale(*mj)).collect());
            let t3 = self.integrate_l(&inner, h)?;
            let d_means = self.ctx.means(&d)?;
            let c3_paths = c3.iter().map(|c| self.integrate_l(c, h)).collect::<Result<Vec<_>>>()?;
            let c_mean = self.ctx.mean(&spec.operator_c_with(f, x, means)?)?;
            for i in 0..n {
                let t4: f64 = c3_paths.iter().zip(&d_means).map(|(p, dm)| p[i] * dm).sum();
                g[i] += res[i][xp] * (t1[i] + kappa * t2[i] + kappa * t3[i] + kappa * t4) - k.at(i)[xp] * c_mean;
            }
        }
        for v in &mut g {
            *v /= m as f64;
        }
        Ok(cumulative_trapezoid(&g, self.grid.dt))
    }

    pub fn kernel_big_l_paths(&self, h: &OdeState, k: &OdeState) -> Result<KernelPaths> {
        let paths = self.kernel_functions().iter().map(|f| self.integrate_big_l(f, h, k)).collect::<Result<Vec<_>>>()?;
        Ok(KernelPaths::from_flat(self.m(), self.spec().n1, paths))
    }

    /// Forcing of the Ψ equation for γ₂ ≥ 5/6.
    ///
    /// Besides the printed terms this carries (y-h)(1/N₁)Σ_j x·x' l(B³ʲ_x) l(B³ʲ_{x'}),
    /// the product of two first-order corrections; without it Ψ would not
    /// coincide with the second term of the general recursion.
    pub fn psi_forcing(&self, h: &OdeState, k: &OdeState, lp: &KernelPaths, big: &KernelPaths) -> Vec<Vec<f64>> {
        let m = self.m();
        let n1 = self.tables.n1;
        let res = self.residuals(h);
        (0..self.grid.len())
            .map(|i| {
                (0..m)
                    .map(|x| {
                        let mut total = 0.0;
                        for xp in 0..m {
                            let mut quad = 0.0;
                            for j in 0..n1 {
                                quad += lp.b3(j, x)[i] * lp.b3(j, xp)[i];
                            }
                            let quad = self.tables.inner(x, xp) * quad / n1 as f64;
                            total += res[i][xp] * (self.linearized_kernel(big, i, x, xp) + quad) - k.at(i)[xp] * self.linearized_kernel(lp, i, x, xp);
                        }
                        total / m as f64
                    })
                    .collect()
            })
            .collect()
    }

    /// Ψ with the case chosen by the regime; the forced case needs K, l and L paths.
    pub fn integrate_psi(&self, regime: &RegimeInfo, inputs: Option<(&OdeState, &OdeState, &KernelPaths, &KernelPaths)>, psi0: &[f64]) -> Result<OdeState> {
        let forcing = inputs.map(|(h, k, lp, big)| self.psi_forcing(h, k, lp, big));
        integrate_psi(regime, &self.a, forcing.as_deref(), psi0, self.grid)
    }
}
