//! Initialization laws: fixed first-layer atoms times two one-dimensional laws.

use rand::{Rng, RngExt};

use crate::error::{Error, Result};
use crate::rng::{self, streams};

const WEIGHT_TOL: f64 = 1e-12;

/// A one-dimensional law used for the inner weights w² and the outer weight c.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarLaw {
    /// Finitely many atoms with probabilities.
    Discrete { atoms: Vec<f64>, weights: Vec<f64> },
    /// Uniform on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// Normal law. Only here to be rejected: its support is unbounded.
    Normal { mean: f64, sd: f64 },
}

impl ScalarLaw {
    /// ±1 with probability 1/2 each.
    pub fn rademacher() -> Self {
        ScalarLaw::Discrete { atoms: vec![-1.0, 1.0], weights: vec![0.5, 0.5] }
    }

    /// Mean-zero law on {-a, b}: P(-a) = b/(a+b). Skewed unless a = b.
    pub fn two_point(a: f64, b: f64) -> Self {
        ScalarLaw::Discrete { atoms: vec![-a, b], weights: vec![b / (a + b), a / (a + b)] }
    }

    pub fn point(v: f64) -> Self {
        ScalarLaw::Discrete { atoms: vec![v], weights: vec![1.0] }
    }

    /// Compact support, finite parameters, weights summing to one and mean zero.
    pub fn validate(&self) -> Result<()> {
        match self {
            ScalarLaw::Discrete { atoms, weights } => {
                if atoms.is_empty() || atoms.len() != weights.len() {
                    return Err(Error::Law("discrete law needs matching non-empty atoms and weights".into()));
                }
                if atoms.iter().chain(weights).any(|v| !v.is_finite()) || weights.iter().any(|&w| w < 0.0) {
                    return Err(Error::Law("discrete law has non-finite atoms or negative weights".into()));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > WEIGHT_TOL {
                    return Err(Error::Law(format!("weights sum to {total}, not 1")));
                }
            }
            ScalarLaw::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::Law(format!("uniform law needs finite lo < hi, got [{lo}, {hi}]")));
                }
            }
            ScalarLaw::Normal { .. } => {
                return Err(Error::Law("normal law has unbounded support".into()));
            }
        }
        let mean = self.mean();
        if mean.abs() > WEIGHT_TOL * (1.0 + self.radius()) {
            return Err(Error::Law(format!("law has mean {mean}, expected 0")));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            ScalarLaw::Discrete { atoms, weights } => atoms.iter().zip(weights).map(|(a, w)| a * w).sum(),
            ScalarLaw::Uniform { lo, hi } => 0.5 * (lo + hi),
            ScalarLaw::Normal { mean, .. } => *mean,
        }
    }

    /// Largest absolute value in the support.
    pub fn radius(&self) -> f64 {
        match self {
            ScalarLaw::Discrete { atoms, .. } => atoms.iter().fold(0.0, |m, a| m.max(a.abs())),
            ScalarLaw::Uniform { lo, hi } => lo.abs().max(hi.abs()),
            ScalarLaw::Normal { .. } => f64::INFINITY,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ScalarLaw::Discrete { .. })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ScalarLaw::Discrete { atoms, weights } => {
                if atoms.len() == 1 {
                    return atoms[0];
                }
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (a, w) in atoms.iter().zip(weights) {
                    acc += w;
                    if u < acc {
                        return *a;
                    }
                }
                *atoms.last().expect("validated non-empty")
            }
            ScalarLaw::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            ScalarLaw::Normal { mean, sd } => {
                let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
                mean + sd * z
            }
        }
    }
}

/// The limit initialization measure: N₁ frozen first-layer atoms, i.i.d. w² entries and c.
#[derive(Debug, Clone, PartialEq)]
pub struct InitLaw {
    /// Row j is the first-layer weight vector w^{1,j}.
    pub w1_atoms: Vec<Vec<f64>>,
    pub w2: ScalarLaw,
    pub c: ScalarLaw,
}

impl InitLaw {
    /// Rademacher c and w², first-layer atoms drawn uniformly on [-1,1]^d from `seed`.
    pub fn rademacher(n1: usize, d: usize, seed: u64) -> Self {
        InitLaw { w1_atoms: uniform_atoms(n1, d, seed), w2: ScalarLaw::rademacher(), c: ScalarLaw::rademacher() }
    }

    /// Every component is the point mass at zero.
    pub fn zero(n1: usize, d: usize) -> Self {
        InitLaw { w1_atoms: vec![vec![0.0; d]; n1], w2: ScalarLaw::point(0.0), c: ScalarLaw::point(0.0) }
    }

    pub fn n1(&self) -> usize {
        self.w1_atoms.len()
    }

    pub fn dim(&self) -> usize {
        self.w1_atoms.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.w1_atoms.is_empty() {
            return Err(Error::Law("no first-layer atoms".into()));
        }
        let d = self.dim();
        if self.w1_atoms.iter().any(|r| r.len() != d || r.iter().any(|v| !v.is_finite())) {
            return Err(Error::Law("first-layer atoms must be finite rows of equal dimension".into()));
        }
        self.w2.validate()?;
        self.c.validate()
    }

    pub fn is_discrete(&self) -> bool {
        self.w2.is_discrete() && self.c.is_discrete()
    }
}

/// N₁ rows uniform on [-1,1]^d from the atom stream of `seed`.
pub fn uniform_atoms(n1: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng::stream(seed, streams::ATOMS);
    (0..n1).map(|_| (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect()).collect()
}
