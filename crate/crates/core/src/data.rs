//! Datasets shared by the trainer, the limit systems and the experiments.

use rand::RngExt;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{self, streams};

/// Minimum pairwise angle of synthetic inputs, in degrees.
pub const MIN_ANGLE_DEG: f64 = 10.0;

const MAX_REJECTIONS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Regression(Vec<f64>),
    Classes(Vec<u8>),
}

/// A fixed finite dataset with uniform empirical law over its points.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub xs: Vec<Vec<f64>>,
    pub targets: Targets,
    pub provenance: String,
}

impl Dataset {
    pub fn regression(xs: Vec<Vec<f64>>, ys: Vec<f64>, provenance: impl Into<String>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::shape(format!("{} inputs but {} targets", xs.len(), ys.len())));
        }
        let ds = Dataset { xs, targets: Targets::Regression(ys), provenance: provenance.into() };
        ds.check_dims()?;
        Ok(ds)
    }

    pub fn classification(xs: Vec<Vec<f64>>, labels: Vec<u8>, provenance: impl Into<String>) -> Result<Self> {
        if xs.len() != labels.len() {
            return Err(Error::shape(format!("{} inputs but {} labels", xs.len(), labels.len())));
        }
        let ds = Dataset { xs, targets: Targets::Classes(labels), provenance: provenance.into() };
        ds.check_dims()?;
        Ok(ds)
    }

    fn check_dims(&self) -> Result<()> {
        let d = self.dim();
        if self.xs.iter().any(|x| x.len() != d) {
            return Err(Error::shape("inputs of unequal dimension"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.xs.first().map_or(0, Vec::len)
    }

    /// Regression targets, or an error for labelled data.
    pub fn ys(&self) -> Result<&[f64]> {
        match &self.targets {
            Targets::Regression(y) => Ok(y),
            Targets::Classes(_) => Err(Error::domain("regression targets required, dataset is labelled")),
        }
    }

    pub fn labels(&self) -> Result<&[u8]> {
        match &self.targets {
            Targets::Classes(l) => Ok(l),
            Targets::Regression(_) => Err(Error::domain("class labels required, dataset is regression")),
        }
    }

    /// Fails if two inputs are positive multiples of each other (or one is zero).
    pub fn check_distinct_directions(&self) -> Result<()> {
        for (i, a) in self.xs.iter().enumerate() {
            let na = norm(a);
            if na == 0.0 {
                return Err(Error::domain(format!("input {i} is the zero vector")));
            }
            for (j, b) in self.xs.iter().enumerate().skip(i + 1) {
                let cos = dot(a, b) / (na * norm(b));
                if cos >= 1.0 - 1e-12 {
                    return Err(Error::domain(format!("inputs {i} and {j} point in the same direction")));
                }
            }
        }
        Ok(())
    }

    /// The points at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let xs = idx.iter().map(|&i| self.xs[i].clone()).collect();
        let targets = match &self.targets {
            Targets::Regression(y) => Targets::Regression(idx.iter().map(|&i| y[i]).collect()),
            Targets::Classes(l) => Targets::Classes(idx.iter().map(|&i| l[i]).collect()),
        };
        Dataset { xs, targets, provenance: self.provenance.clone() }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// M unit-norm inputs in ℝ^d with pairwise angles of at least 10° and targets uniform on [-1, 1].
pub fn synth_dataset(m: usize, d: usize, seed: u64) -> Result<Dataset> {
    if m == 0 {
        return Err(Error::domain("dataset size must be at least 1"));
    }
    if d < 2 {
        return Err(Error::domain("input dimension must be at least 2"));
    }
    let max_cos = MIN_ANGLE_DEG.to_radians().cos();
    let mut rng = rng::stream(seed, streams::DATA);
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut rejections = 0;
    while xs.len() < m {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = norm(&v);
        if n < 1e-12 {
            continue;
        }
        let u: Vec<f64> = v.iter().map(|x| x / n).collect();
        if xs.iter().all(|p| dot(p, &u) < max_cos) {
            xs.push(u);
        } else {
            rejections += 1;
            if rejections > MAX_REJECTIONS {
                return Err(Error::domain(format!("cannot pack {m} directions in dimension {d} at {MIN_ANGLE_DEG} degrees")));
            }
        }
    }
    let ys = (0..m).map(|_| rng.random_range(-1.0..=1.0)).collect();
    Dataset::regression(xs, ys, format!("synthetic(m={m},d={d},seed={seed})"))
}
