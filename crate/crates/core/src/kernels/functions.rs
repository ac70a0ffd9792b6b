//! Particle functions built from the network: Z(x), the kernels B¹, B²ʲ, B³ʲ
//! and the operators C^{f,1}, C^{f,2}, C³ and C^{N₁,f}.

use super::expect::{expect, expect_many, Method};
use super::testfn::{TestFunction, Var};
use crate::activation::Activation;
use crate::error::Result;
use crate::law::InitLaw;

/// First-layer width, its exponent and the activation: all a particle function needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub n1: usize,
    pub gamma1: f64,
    pub act: Activation,
}

impl KernelSpec {
    pub fn new(n1: usize, gamma1: f64, act: Activation) -> Self {
        KernelSpec { n1, gamma1, act }
    }

    /// N₁^{-(1-γ₁)}.
    pub fn kappa(&self) -> f64 {
        (self.n1 as f64).powf(-(1.0 - self.gamma1))
    }

    /// Z(x) = N₁^{-γ₁} Σ_j w^{2,j} σ(w^{1,j}x).
    pub fn z(&self, x: &[f64]) -> TestFunction {
        let terms = (0..self.n1).map(|j| TestFunction::w2(j) * self.sigma_inner(j, x, 0)).collect();
        TestFunction::sum(terms).scale((self.n1 as f64).powf(-self.gamma1))
    }

    /// σ^{(order)}(Z(x)).
    pub fn sigma_z(&self, x: &[f64], order: u32) -> TestFunction {
        TestFunction::act(self.act, order, self.z(x))
    }

    /// σ^{(order)}(w^{1,j}x).
    pub fn sigma_inner(&self, j: usize, x: &[f64], order: u32) -> TestFunction {
        TestFunction::act(self.act, order, TestFunction::dot(j, x))
    }

    /// B¹_{x,x'} = σ(Z(x))σ(Z(x')).
    pub fn b1(&self, x: &[f64], xp: &[f64]) -> TestFunction {
        self.sigma_z(x, 0) * self.sigma_z(xp, 0)
    }

    /// B²ʲ_{x,x'} = c² σ'(Z(x))σ'(Z(x')) σ(w^{1,j}x)σ(w^{1,j}x').
    pub fn b2(&self, j: usize, x: &[f64], xp: &[f64]) -> TestFunction {
        TestFunction::prod(vec![
            TestFunction::c(),
            TestFunction::c(),
            self.sigma_z(x, 1),
            self.sigma_z(xp, 1),
            self.sigma_inner(j, x, 0),
            self.sigma_inner(j, xp, 0),
        ])
    }

    /// B³ʲ_x = c w^{2,j} σ'(w^{1,j}x) σ'(Z(x)); identical to C³ʲ_x.
    pub fn b3(&self, j: usize, x: &[f64]) -> TestFunction {
        TestFunction::prod(vec![TestFunction::c(), TestFunction::w2(j), self.sigma_inner(j, x, 1), self.sigma_z(x, 1)])
    }

    /// C³ʲ_x = c σ'(Z(x)) σ'(w^{1,j}x) w^{2,j}.
    pub fn c3(&self, j: usize, x: &[f64]) -> TestFunction {
        self.b3(j, x)
    }

    /// c σ(Z(x)) c σ(Z(x')), the integrand of the initial output covariance.
    pub fn cov_fn(&self, x: &[f64], xp: &[f64]) -> TestFunction {
        TestFunction::prod(vec![TestFunction::c(), TestFunction::c(), self.sigma_z(x, 0), self.sigma_z(xp, 0)])
    }

    /// |c σ(Z(x))|².
    pub fn lambda_fn(&self, x: &[f64]) -> TestFunction {
        self.cov_fn(x, x)
    }

    /// C^{f,1}_x = ∂_c f σ(Z(x)).
    pub fn cf1(&self, f: &TestFunction, x: &[f64]) -> Result<TestFunction> {
        Ok(f.partial(Var::C)? * self.sigma_z(x, 0))
    }

    /// C^{f,2}_x = c σ'(Z(x)) Σ_j σ(w^{1,j}x) ∂_{w^{2,j}} f.
    pub fn cf2(&self, f: &TestFunction, x: &[f64]) -> Result<TestFunction> {
        let mut terms = Vec::with_capacity(self.n1);
        for j in 0..self.n1 {
            let d = f.partial(Var::W2(j))?;
            if !d.is_zero() {
                terms.push(self.sigma_inner(j, x, 0) * d);
            }
        }
        Ok(TestFunction::prod(vec![TestFunction::c(), self.sigma_z(x, 1), TestFunction::sum(terms)]))
    }

    /// D_{j,x} f = ∇_{w^{1,j}} f · x.
    pub fn grad_w1_dot(&self, f: &TestFunction, j: usize, x: &[f64]) -> Result<TestFunction> {
        let mut terms = Vec::with_capacity(x.len());
        for (k, &xk) in x.iter().enumerate() {
            let d = f.partial(Var::W1(j, k))?;
            if xk != 0.0 && !d.is_zero() {
                terms.push(d.scale(xk));
            }
        }
        Ok(TestFunction::sum(terms))
    }

    /// (C^{f,1}_x, C^{f,2}_x, [C³ʲ_x for each j]).
    pub fn operators(&self, f: &TestFunction, x: &[f64]) -> Result<(TestFunction, TestFunction, Vec<TestFunction>)> {
        Ok((self.cf1(f, x)?, self.cf2(f, x)?, (0..self.n1).map(|j| self.c3(j, x)).collect()))
    }

    /// C^{N₁,f}_x = C^{f,1}_x + κ C^{f,2}_x + κ Σ_j ⟨C³ʲ_x⟩ D_{j,x} f, given the means ⟨C³ʲ_x⟩.
    pub fn operator_c_with(&self, f: &TestFunction, x: &[f64], c3_means: &[f64]) -> Result<TestFunction> {
        let kappa = self.kappa();
        let mut terms = vec![self.cf1(f, x)?, self.cf2(f, x)?.scale(kappa)];
        for (j, &m) in c3_means.iter().enumerate() {
            if m != 0.0 {
                terms.push(self.grad_w1_dot(f, j, x)?.scale(kappa * m));
            }
        }
        Ok(TestFunction::sum(terms))
    }
}

/// A [`KernelSpec`] paired with the law it is integrated against.
#[derive(Debug, Clone)]
pub struct KernelContext {
    pub spec: KernelSpec,
    pub law: InitLaw,
    pub method: Method,
}

impl KernelContext {
    pub fn new(spec: KernelSpec, law: InitLaw) -> Self {
        let method = Method::default_for(&law);
        KernelContext { spec, law, method }
    }

    pub fn mean(&self, f: &TestFunction) -> Result<f64> {
        Ok(expect(f, &self.law, self.method)?.value)
    }

    pub fn means(&self, fs: &[TestFunction]) -> Result<Vec<f64>> {
        Ok(expect_many(fs, &self.law, self.method)?.into_iter().map(|e| e.value).collect())
    }

    /// ⟨C³ʲ_x⟩ for every j.
    pub fn c3_means(&self, x: &[f64]) -> Result<Vec<f64>> {
        let fs: Vec<TestFunction> = (0..self.spec.n1).map(|j| self.spec.c3(j, x)).collect();
        self.means(&fs)
    }

    /// C^{N₁,f}_x with the inner bracket evaluated against the law.
    pub fn operator_c(&self, f: &TestFunction, x: &[f64]) -> Result<TestFunction> {
        self.spec.operator_c_with(f, x, &self.c3_means(x)?)
    }
}

/// C^{N₁,f}_{x'} for a law and first-layer scaling, with the default expectation method.
pub fn operator_c(f: &TestFunction, x: &[f64], law: &InitLaw, n1: usize, gamma1: f64, act: Activation) -> Result<TestFunction> {
    KernelContext::new(KernelSpec::new(n1, gamma1, act), law.clone()).operator_c(f, x)
}
