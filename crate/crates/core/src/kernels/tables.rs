//! Dataset-indexed kernel tables, the matrix A and the initial Gaussian.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use super::expect::expect_many;
use super::functions::{KernelContext, KernelSpec};
use super::testfn::TestFunction;
use crate::error::{Error, Result};
use crate::law::InitLaw;
use crate::rng::{self, streams};

/// ⟨B¹⟩, ⟨B²ʲ⟩, ⟨B³ʲ⟩ on a dataset of M points.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTables {
    pub m: usize,
    pub n1: usize,
    /// ⟨B¹_{x,x'}⟩, M×M row-major.
    pub b1: Vec<f64>,
    /// ⟨B²ʲ_{x,x'}⟩ at `(j*M + x)*M + x'`.
    pub b2: Vec<f64>,
    /// ⟨B³ʲ_x⟩ at `j*M + x`.
    pub b3: Vec<f64>,
    /// x·x', M×M.
    pub inner: Vec<f64>,
}

impl KernelTables {
    pub fn b1(&self, x: usize, xp: usize) -> f64 {
        self.b1[x * self.m + xp]
    }

    pub fn b2(&self, j: usize, x: usize, xp: usize) -> f64 {
        self.b2[(j * self.m + x) * self.m + xp]
    }

    pub fn b3(&self, j: usize, x: usize) -> f64 {
        self.b3[j * self.m + x]
    }

    pub fn inner(&self, x: usize, xp: usize) -> f64 {
        self.inner[x * self.m + xp]
    }

    /// One CSV per tensor with leading index columns: b1.csv, b2.csv, b3.csv, and a.csv when given.
    pub fn write_csv(&self, dir: &Path, a: Option<&DMatrix<f64>>) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("b1.csv"))?;
        w.write_record(["x", "xp", "value"])?;
        for x in 0..self.m {
            for xp in 0..self.m {
                w.write_record([x.to_string(), xp.to_string(), self.b1(x, xp).to_string()])?;
            }
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("b2.csv"))?;
        w.write_record(["j", "x", "xp", "value"])?;
        for j in 0..self.n1 {
            for x in 0..self.m {
                for xp in 0..self.m {
                    w.write_record([j.to_string(), x.to_string(), xp.to_string(), self.b2(j, x, xp).to_string()])?;
                }
            }
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("b3.csv"))?;
        w.write_record(["j", "x", "value"])?;
        for j in 0..self.n1 {
            for x in 0..self.m {
                w.write_record([j.to_string(), x.to_string(), self.b3(j, x).to_string()])?;
            }
        }
        w.flush()?;
        if let Some(a) = a {
            let mut f = std::fs::File::create(dir.join("a.csv"))?;
            writeln!(f, "x,xp,value")?;
            for x in 0..a.nrows() {
                for xp in 0..a.ncols() {
                    writeln!(f, "{x},{xp},{}", a[(x, xp)])?;
                }
            }
        }
        Ok(())
    }
}

/// Expectation tables for every (x, x', j), computed in a single pass over the law.
pub fn kernel_b(xs: &[Vec<f64>], law: &InitLaw, spec: &KernelSpec) -> Result<KernelTables> {
    if law.n1() != spec.n1 {
        return Err(Error::shape(format!("law has {} atoms, N1 = {}", law.n1(), spec.n1)));
    }
    if xs.iter().any(|x| x.len() != law.dim()) {
        return Err(Error::shape("input dimension differs from the first-layer atoms"));
    }
    let m = xs.len();
    let n1 = spec.n1;
    let mut fs: Vec<TestFunction> = Vec::new();
    for x in xs {
        for xp in xs {
            fs.push(spec.b1(x, xp));
        }
    }
    for j in 0..n1 {
        for x in xs {
            for xp in xs {
                fs.push(spec.b2(j, x, xp));
            }
        }
    }
    for j in 0..n1 {
        for x in xs {
            fs.push(spec.b3(j, x));
        }
    }
    let ctx = KernelContext::new(*spec, law.clone());
    let vals: Vec<f64> = expect_many(&fs, law, ctx.method)?.into_iter().map(|e| e.value).collect();
    let (b1, rest) = vals.split_at(m * m);
    let (b2, b3) = rest.split_at(n1 * m * m);
    let inner = xs.iter().flat_map(|x| xs.iter().map(move |xp| x.iter().zip(xp).map(|(a, b)| a * b).sum())).collect();
    Ok(KernelTables { m, n1, b1: b1.to_vec(), b2: b2.to_vec(), b3: b3.to_vec(), inner })
}

/// A_{x,x'} = ⟨B¹⟩ + (1/N₁) Σ_j [⟨B²ʲ⟩ + x·x' ⟨B³ʲ_x⟩⟨B³ʲ_{x'}⟩].
pub fn assemble_a(tables: &KernelTables) -> DMatrix<f64> {
    let (m, n1) = (tables.m, tables.n1);
    DMatrix::from_fn(m, m, |x, xp| {
        let mut s = 0.0;
        for j in 0..n1 {
            s += tables.b2(j, x, xp) + tables.inner(x, xp) * tables.b3(j, x) * tables.b3(j, xp);
        }
        tables.b1(x, xp) + s / n1 as f64
    })
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// λ²(x) = ⟨|c σ(Z(x))|²⟩.
pub fn lambda_sq(x: &[f64], law: &InitLaw, spec: &KernelSpec) -> Result<f64> {
    KernelContext::new(*spec, law.clone()).mean(&spec.lambda_fn(x))
}

/// ⟨c² σ(Z(x)) σ(Z(x'))⟩ over the dataset; the diagonal is λ².
pub fn gaussian_covariance(xs: &[Vec<f64>], law: &InitLaw, spec: &KernelSpec) -> Result<DMatrix<f64>> {
    let m = xs.len();
    let fs: Vec<TestFunction> = xs.iter().flat_map(|x| xs.iter().map(move |xp| spec.cov_fn(x, xp))).collect();
    let vals = KernelContext::new(*spec, law.clone()).means(&fs)?;
    Ok(DMatrix::from_fn(m, m, |i, j| vals[i * m + j]))
}

/// One draw of a mean-zero Gaussian vector with covariance `cov`, from the Gaussian stream of `seed`.
pub fn sample_gaussian(cov: &DMatrix<f64>, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, streams::GAUSSIAN);
    let m = cov.nrows();
    let z = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
    let root = match cov.clone().cholesky() {
        Some(ch) => ch.l(),
        None => {
            // Semidefinite covariance: use the clamped symmetric square root.
            let eig = SymmetricEigen::new(cov.clone());
            let sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
            &eig.eigenvectors * sqrt * eig.eigenvectors.transpose()
        }
    };
    (root * z).iter().copied().collect()
}
