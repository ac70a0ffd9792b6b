//! Expectations ⟨f, γ₀⟩ against the limit initialization law.

use gauss_quad::legendre::GaussLegendre;
use rayon::prelude::*;

use super::testfn::{Tape, TestFunction, Var};
use crate::error::{Error, Result};
use crate::law::{InitLaw, ScalarLaw};
use crate::rng::{self, streams};

/// Nodes per continuous component in the default quadrature.
pub const DEFAULT_QUAD_NODES: usize = 64;
/// Largest tensor grid an exact method may visit.
pub const MAX_GRID: usize = 20_000_000;

const BLOCK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Exact sum over the atoms of a fully discrete law.
    Enumerate,
    /// Gauss–Legendre on continuous components, atoms on discrete ones.
    Quadrature { nodes: usize },
    /// Plain Monte Carlo with a standard-error estimate.
    MonteCarlo { samples: usize, seed: u64 },
}

impl Method {
    /// Enumeration for discrete laws, 64-node quadrature otherwise.
    pub fn default_for(law: &InitLaw) -> Self {
        if law.is_discrete() {
            Method::Enumerate
        } else {
            Method::Quadrature { nodes: DEFAULT_QUAD_NODES }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    /// Standard error, for Monte Carlo only.
    pub se: Option<f64>,
}

pub fn expect(f: &TestFunction, law: &InitLaw, method: Method) -> Result<Estimate> {
    Ok(expect_many(std::slice::from_ref(f), law, method)?.remove(0))
}

/// ⟨f, γ₀⟩ by the law's default method.
pub fn mean(f: &TestFunction, law: &InitLaw) -> Result<f64> {
    Ok(expect(f, law, Method::default_for(law))?.value)
}

pub fn expect_many(fs: &[TestFunction], law: &InitLaw, method: Method) -> Result<Vec<Estimate>> {
    law.validate()?;
    check_vars(fs, law)?;
    if fs.is_empty() {
        return Ok(Vec::new());
    }
    if let Some(values) = constants(fs) {
        return Ok(values.into_iter().map(|value| Estimate { value, se: None }).collect());
    }
    match method {
        Method::Enumerate => {
            if !law.is_discrete() {
                return Err(Error::Law("enumeration needs discrete laws for c and w2".into()));
            }
            Ok(grid_expectation(fs, law, 0)?.into_iter().map(|value| Estimate { value, se: None }).collect())
        }
        Method::Quadrature { nodes } => {
            if nodes == 0 {
                return Err(Error::domain("quadrature needs at least one node"));
            }
            Ok(grid_expectation(fs, law, nodes)?.into_iter().map(|value| Estimate { value, se: None }).collect())
        }
        Method::MonteCarlo { samples, seed } => monte_carlo(fs, law, samples, seed),
    }
}

fn constants(fs: &[TestFunction]) -> Option<Vec<f64>> {
    fs.iter().map(TestFunction::as_const).collect()
}

fn check_vars(fs: &[TestFunction], law: &InitLaw) -> Result<()> {
    let (n1, d) = (law.n1(), law.dim());
    for f in fs {
        for v in f.deps() {
            let ok = match *v {
                Var::C => true,
                Var::W2(j) => j < n1,
                Var::W1(j, k) => j < n1 && k < d,
            };
            if !ok {
                return Err(Error::shape(format!("test function uses {v:?} outside N1 = {n1}, d = {d}")));
            }
        }
    }
    Ok(())
}

/// (value, probability) pairs of a one-dimensional law: atoms, or Gauss–Legendre nodes when `nodes > 0`.
fn rule(law: &ScalarLaw, nodes: usize) -> Result<Vec<(f64, f64)>> {
    match law {
        ScalarLaw::Discrete { atoms, weights } => Ok(atoms.iter().copied().zip(weights.iter().copied()).filter(|(_, w)| *w > 0.0).collect()),
        ScalarLaw::Uniform { lo, hi } => {
            if nodes == 0 {
                return Err(Error::Law("enumeration needs discrete laws for c and w2".into()));
            }
            let gl = GaussLegendre::new(nodes.try_into().expect("nodes > 0"));
            let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            Ok(gl.as_node_weight_pairs().iter().map(|&(x, w)| (mid + half * x, 0.5 * w)).collect())
        }
        ScalarLaw::Normal { .. } => Err(Error::Law("normal law has unbounded support".into())),
    }
}

/// Tensor-product sum over the coordinates the functions actually depend on.
fn grid_expectation(fs: &[TestFunction], law: &InitLaw, nodes: usize) -> Result<Vec<f64>> {
    let tape = Tape::compile(fs);
    let n1 = law.n1();
    let uses_c = tape.deps().contains(&Var::C);
    let used_w2: Vec<usize> = (0..n1).filter(|j| tape.deps().contains(&Var::W2(*j))).collect();
    let c_rule = if uses_c { rule(&law.c, nodes)? } else { vec![(0.0, 1.0)] };
    let w_rule = if used_w2.is_empty() { Vec::new() } else { rule(&law.w2, nodes)? };
    let kw = w_rule.len().max(1);
    let mut total = c_rule.len();
    for _ in &used_w2 {
        total = total
            .checked_mul(kw)
            .filter(|t| *t <= MAX_GRID)
            .ok_or_else(|| Error::domain(format!("expectation grid exceeds {MAX_GRID} points; use Monte Carlo for this law and N1")))?;
    }
    let w1: Vec<f64> = law.w1_atoms.concat();
    let roots = tape.roots();
    let blocks = total.div_ceil(BLOCK);
    let partials: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut scratch = tape.scratch();
            let mut w2 = vec![0.0; n1];
            let mut acc = vec![0.0; roots];
            for idx in b * BLOCK..((b + 1) * BLOCK).min(total) {
                let mut rest = idx;
                let (c, wc) = c_rule[rest % c_rule.len()];
                rest /= c_rule.len();
                let mut weight = wc;
                for &j in &used_w2 {
                    let (v, w) = w_rule[rest % kw];
                    rest /= kw;
                    w2[j] = v;
                    weight *= w;
                }
                tape.run(&mut scratch, c, &w2, &w1);
                for (a, v) in acc.iter_mut().zip(tape.root_values(&scratch)) {
                    *a += weight * v;
                }
            }
            acc
        })
        .collect();
    Ok((0..roots).map(|r| pairwise(&partials.iter().map(|p| p[r]).collect::<Vec<_>>())).collect())
}

/// Pairwise summation in a fixed order.
pub fn pairwise(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n if n <= 8 => v.iter().sum(),
        n => pairwise(&v[..n / 2]) + pairwise(&v[n / 2..]),
    }
}

fn monte_carlo(fs: &[TestFunction], law: &InitLaw, samples: usize, seed: u64) -> Result<Vec<Estimate>> {
    if samples < 2 {
        return Err(Error::domain("Monte Carlo needs at least two samples"));
    }
    let tape = Tape::compile(fs);
    let n1 = law.n1();
    let w1: Vec<f64> = law.w1_atoms.concat();
    let mut rng = rng::stream(seed, streams::MONTE_CARLO);
    let mut scratch = tape.scratch();
    let mut w2 = vec![0.0; n1];
    let roots = tape.roots();
    let (mut sum, mut sq) = (vec![0.0; roots], vec![0.0; roots]);
    for _ in 0..samples {
        let c = law.c.sample(&mut rng);
        for v in w2.iter_mut() {
            *v = law.w2.sample(&mut rng);
        }
        tape.run(&mut scratch, c, &w2, &w1);
        for ((s, q), v) in sum.iter_mut().zip(sq.iter_mut()).zip(tape.root_values(&scratch)) {
            *s += v;
            *q += v * v;
        }
    }
    let n = samples as f64;
    Ok(sum
        .iter()
        .zip(&sq)
        .map(|(s, q)| {
            let m = s / n;
            let var = ((q - n * m * m) / (n - 1.0)).max(0.0);
            Estimate { value: m, se: Some((var / n).sqrt()) }
        })
        .collect())
}
