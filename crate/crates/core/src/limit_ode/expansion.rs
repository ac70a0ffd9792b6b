//! The inductive expansion: l_{n,t}(f) and Q_{n,t} for arbitrary n.

use std::collections::HashMap;
use std::path::Path as FsPath;
use std::rc::Rc;

use super::{cumulative_trapezoid, integrate_linear, Grid, LimitProblem, OdeState, Path, RegimeInfo, MAX_EXPANSION_ORDER};
use crate::error::{Error, Result};
use crate::kernels::TestFunction;

/// C^{f,1}_{x'}, C^{f,2}_{x'} and D_{j,x'} f for one (f, x').
struct Ops {
    cf1: TestFunction,
    cf2: TestFunction,
    d: Vec<TestFunction>,
}

/// Memoized l_n paths on the grid, driven by the Q_n computed so far.
pub struct ExpansionEngine<'a> {
    problem: &'a LimitProblem,
    /// y - Q₀ on the grid.
    residuals: Vec<Vec<f64>>,
    /// Q₁, Q₂, ... in order.
    q: Vec<OdeState>,
    paths: HashMap<(usize, u128), Rc<Path>>,
    means: HashMap<u128, f64>,
    ops: HashMap<(u128, usize), Rc<Ops>>,
    /// C³ʲ_{x'} per data point.
    c3: Vec<Vec<TestFunction>>,
}

impl<'a> ExpansionEngine<'a> {
    pub fn new(problem: &'a LimitProblem, h: &OdeState) -> Self {
        let spec = problem.spec();
        let c3 = problem.xs.iter().map(|x| (0..spec.n1).map(|j| spec.c3(j, x)).collect()).collect();
        ExpansionEngine { problem, residuals: problem.residuals(h), q: Vec::new(), paths: HashMap::new(), means: HashMap::new(), ops: HashMap::new(), c3 }
    }

    /// Registers Q_n; corrections must be pushed in order starting at n = 1.
    pub fn push_q(&mut self, q: OdeState) {
        self.q.push(q);
    }

    fn len(&self) -> usize {
        self.problem.grid.len()
    }

    fn mean(&mut self, f: &TestFunction) -> Result<f64> {
        if let Some(v) = self.means.get(&f.key()) {
            return Ok(*v);
        }
        let v = self.problem.ctx.mean(f)?;
        self.means.insert(f.key(), v);
        Ok(v)
    }

    fn ops(&mut self, f: &TestFunction, xp: usize) -> Result<Rc<Ops>> {
        if let Some(o) = self.ops.get(&(f.key(), xp)) {
            return Ok(o.clone());
        }
        let spec = self.problem.spec();
        let x = &self.problem.xs[xp];
        let d = (0..spec.n1).map(|j| spec.grad_w1_dot(f, j, x)).collect::<Result<_>>()?;
        let o = Rc::new(Ops { cf1: spec.cf1(f, x)?, cf2: spec.cf2(f, x)?, d });
        self.ops.insert((f.key(), xp), o.clone());
        Ok(o)
    }

    /// l_{n,t}(f) on the grid; l₀ is the constant ⟨f, γ₀⟩.
    pub fn l(&mut self, n: usize, f: &TestFunction) -> Result<Rc<Path>> {
        let len = self.len();
        if let Some(c) = f.as_const() {
            return Ok(Rc::new(vec![if n == 0 { c } else { 0.0 }; len]));
        }
        if let Some(p) = self.paths.get(&(n, f.key())) {
            return Ok(p.clone());
        }
        let path = if n == 0 {
            vec![self.mean(f)?; len]
        } else {
            if self.q.len() + 1 < n {
                return Err(Error::domain(format!("l_{n} needs Q_1..Q_{} first", n - 1)));
            }
            let m = self.problem.m();
            let mut g = vec![0.0; len];
            for xp in 0..m {
                let gk: Vec<Path> = (0..n).map(|k| self.g_path(k, f, xp)).collect::<Result<_>>()?;
                for (i, gi) in g.iter_mut().enumerate() {
                    let mut v = self.residuals[i][xp] * gk[n - 1][i];
                    for mm in 1..n {
                        v -= self.q[n - mm - 1].at(i)[xp] * gk[mm - 1][i];
                    }
                    *gi += v;
                }
            }
            g.iter_mut().for_each(|v| *v /= m as f64);
            cumulative_trapezoid(&g, self.problem.grid.dt)
        };
        let path = Rc::new(path);
        self.paths.insert((n, f.key()), path.clone());
        Ok(path)
    }

    /// l_k(C^{f,1}) + κ l_k(C^{f,2}) + κ Σ_j Σ_{i≤k} l_i(C³ʲ) l_{k-i}(D_j f) at x'.
    fn g_path(&mut self, k: usize, f: &TestFunction, xp: usize) -> Result<Path> {
        let kappa = self.problem.spec().kappa();
        let ops = self.ops(f, xp)?;
        let a = self.l(k, &ops.cf1)?;
        let b = self.l(k, &ops.cf2)?;
        let mut out: Path = a.iter().zip(b.iter()).map(|(a, b)| a + kappa * b).collect();
        for j in 0..ops.d.len() {
            if ops.d[j].is_zero() {
                continue;
            }
            let c3 = self.c3[xp][j].clone();
            for i in 0..=k {
                let u = self.l(i, &c3)?;
                let v = self.l(k - i, &ops.d[j])?;
                for (o, (u, v)) in out.iter_mut().zip(u.iter().zip(v.iter())) {
                    *o += kappa * u * v;
                }
            }
        }
        Ok(out)
    }

    /// l_m(B¹) + (1/N₁)Σ_j [l_m(B²ʲ) + x·x' Σ_{k≤m} l_k(B³ʲ_x) l_{m-k}(B³ʲ_{x'})], as `[i][x*M + x']`.
    fn bracket(&mut self, order: usize) -> Result<Vec<Vec<f64>>> {
        let m = self.problem.m();
        let n1 = self.problem.spec().n1;
        let len = self.len();
        let spec = *self.problem.spec();
        let xs = self.problem.xs.clone();
        let mut out = vec![vec![0.0; m * m]; len];
        for x in 0..m {
            for xp in 0..m {
                let inner = self.problem.tables.inner(x, xp);
                let mut acc = (*self.l(order, &spec.b1(&xs[x], &xs[xp]))?).clone();
                for j in 0..n1 {
                    let b2 = self.l(order, &spec.b2(j, &xs[x], &xs[xp]))?;
                    let mut quad = vec![0.0; len];
                    for k in 0..=order {
                        let u = self.l(k, &spec.b3(j, &xs[x]))?;
                        let v = self.l(order - k, &spec.b3(j, &xs[xp]))?;
                        for i in 0..len {
                            quad[i] += u[i] * v[i];
                        }
                    }
                    for i in 0..len {
                        acc[i] += (b2[i] + inner * quad[i]) / n1 as f64;
                    }
                }
                for i in 0..len {
                    out[i][x * m + xp] = acc[i];
                }
            }
        }
        Ok(out)
    }

    /// Forcing of the Q_n equation; the m = 0 self-coupling is the A term of the integrator.
    pub fn q_forcing(&mut self, n: usize) -> Result<Vec<Vec<f64>>> {
        if n == 0 || self.q.len() + 1 < n {
            return Err(Error::domain(format!("Q_{n} forcing needs Q_1..Q_{}", n.saturating_sub(1))));
        }
        let m = self.problem.m();
        let len = self.len();
        let brackets: Vec<Vec<Vec<f64>>> = (1..=n).map(|o| self.bracket(o)).collect::<Result<_>>()?;
        let mut out = vec![vec![0.0; m]; len];
        for i in 0..len {
            for x in 0..m {
                let mut total = 0.0;
                for xp in 0..m {
                    total += self.residuals[i][xp] * brackets[n - 1][i][x * m + xp];
                    for mm in 1..n {
                        total -= self.q[n - mm - 1].at(i)[xp] * brackets[mm - 1][i][x * m + xp];
                    }
                }
                out[i][x] = total / m as f64;
            }
        }
        Ok(out)
    }
}

/// Q₀ = h, the deterministic corrections and the Gaussian term.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionState {
    pub regime: RegimeInfo,
    pub grid: Grid,
    /// Q₀ ..= Q_top, top = regime.expansion_order().
    pub q: Vec<OdeState>,
    /// The initial Gaussian value 𝒢 placed in Q_top.
    pub gaussian: Vec<f64>,
}

impl ExpansionState {
    /// CSV `t,order,component_index,value`.
    pub fn write_csv(&self, path: &FsPath) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "order", "component_index", "value"])?;
        for (n, q) in self.q.iter().enumerate() {
            for (i, v) in q.values.iter().enumerate() {
                for (x, val) in v.iter().enumerate() {
                    w.write_record([self.grid.t(i).to_string(), n.to_string(), x.to_string(), val.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Q₁..Q_top for the regime. Inside a window the top term decays from 𝒢;
/// at a window edge it also carries the forcing of its order.
pub fn expansion_recursion(problem: &LimitProblem, regime: &RegimeInfo, gaussian: &[f64]) -> Result<ExpansionState> {
    if regime.nu > MAX_EXPANSION_ORDER {
        return Err(Error::domain(format!("expansion window nu = {} exceeds the supported order {MAX_EXPANSION_ORDER}", regime.nu)));
    }
    let m = problem.m();
    if gaussian.len() != m {
        return Err(Error::shape(format!("Gaussian draw has {} entries for {m} data points", gaussian.len())));
    }
    let h = problem.h()?;
    let mut engine = ExpansionEngine::new(problem, &h);
    let top = regime.expansion_order();
    let mut q = vec![h];
    for n in 1..top {
        let f = engine.q_forcing(n)?;
        let qn = integrate_linear(&problem.a, &vec![0.0; m], Some(&f), problem.grid)?;
        engine.push_q(qn.clone());
        q.push(qn);
    }
    let last = if regime.boundary {
        let f = engine.q_forcing(top)?;
        integrate_linear(&problem.a, gaussian, Some(&f), problem.grid)?
    } else {
        integrate_linear(&problem.a, gaussian, None, problem.grid)?
    };
    q.push(last);
    Ok(ExpansionState { regime: *regime, grid: problem.grid, q, gaussian: gaussian.to_vec() })
}

/// ĥ = Σ_{n<top} N₂^{-n(1-γ₂)} Q_n + N₂^{-(γ₂-1/2)} Q_top.
pub fn reconstruct(expansion: &ExpansionState, n2: f64) -> OdeState {
    let g = expansion.regime.gamma2;
    let top = expansion.q.len() - 1;
    let weights: Vec<f64> = (0..=top).map(|n| if n < top { n2.powf(-(n as f64) * (1.0 - g)) } else { n2.powf(-(g - 0.5)) }).collect();
    let mut out = OdeState::zeros(expansion.grid, expansion.q[0].dim());
    for (w, q) in weights.iter().zip(&expansion.q) {
        for (o, v) in out.values.iter_mut().zip(&q.values) {
            for (a, b) in o.iter_mut().zip(v) {
                *a += w * b;
            }
        }
    }
    out
}
