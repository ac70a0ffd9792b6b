//! Scaled feed-forward networks of arbitrary depth.
//!
//! Layer k has N_k units and normalization N_k^{-γ_k}. The first layer reads
//! the input through `W¹` (N₁×d), layer k ≥ 2 reads layer k-1 through `W^k`
//! (N_k×N_{k-1}), and the output is N_m^{-γ_m} Σ_i C^i σ(Z^{m,i}).

use rand::Rng;

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::law::InitLaw;
use crate::rng::{self, streams};

/// Widths, normalization exponents and base rate constants of a depth-m network.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingConfig {
    /// N_1..N_m.
    pub widths: Vec<usize>,
    /// γ_1..γ_m.
    pub gammas: Vec<f64>,
    /// Base rate constants in group order C, W1, W2, ..., Wm.
    pub alphas: Vec<f64>,
    pub activation: Activation,
    /// Number of output units. 1 for regression, 10 for the digit classifier.
    pub outputs: usize,
}

impl ScalingConfig {
    pub fn new(widths: Vec<usize>, gammas: Vec<f64>) -> Result<Self> {
        let m = widths.len();
        let cfg = ScalingConfig { widths, gammas, alphas: vec![1.0; m + 1], activation: Activation::Tanh, outputs: 1 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn two_layer(n1: usize, n2: usize, gamma1: f64, gamma2: f64) -> Result<Self> {
        Self::new(vec![n1, n2], vec![gamma1, gamma2])
    }

    pub fn three_layer(n: [usize; 3], gamma: [f64; 3]) -> Result<Self> {
        Self::new(n.to_vec(), gamma.to_vec())
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_outputs(mut self, outputs: usize) -> Result<Self> {
        self.outputs = outputs;
        self.validate()?;
        Ok(self)
    }

    pub fn with_alphas(mut self, alphas: Vec<f64>) -> Result<Self> {
        self.alphas = alphas;
        self.validate()?;
        Ok(self)
    }

    pub fn depth(&self) -> usize {
        self.widths.len()
    }

    /// Width of the last hidden layer, N_m.
    pub fn top_width(&self) -> usize {
        *self.widths.last().expect("validated depth >= 1")
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.widths.len();
        if m == 0 {
            return Err(Error::domain("depth must be at least 1"));
        }
        if self.gammas.len() != m {
            return Err(Error::shape(format!("{} widths but {} gammas", m, self.gammas.len())));
        }
        if self.alphas.len() != m + 1 {
            return Err(Error::shape(format!("expected {} rate constants, got {}", m + 1, self.alphas.len())));
        }
        for (i, &g) in self.gammas.iter().enumerate() {
            check_gamma(i + 1, g)?;
        }
        if let Some(i) = self.widths.iter().position(|&n| n == 0) {
            return Err(Error::domain(format!("width N{} must be at least 1", i + 1)));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::domain(format!("rate constant {a} must be positive")));
        }
        if self.outputs == 0 {
            return Err(Error::domain("at least one output is required"));
        }
        Ok(())
    }

    /// N_k^{-γ_k} for layer k (1-based).
    pub fn norm(&self, k: usize) -> f64 {
        (self.widths[k - 1] as f64).powf(-self.gammas[k - 1])
    }
}

/// Rejects γ outside [1/2, 1]. The message names the layer.
pub fn check_gamma(layer: usize, gamma: f64) -> Result<()> {
    if !(0.5..=1.0).contains(&gamma) {
        return Err(Error::domain(format!("gamma{layer} out of range (1/2,1]")));
    }
    Ok(())
}

/// Network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Theta {
    /// Outer weights, `outputs × N_m` row-major.
    pub c: Vec<f64>,
    /// `w[0]` is W¹ (N₁×d), `w[k-1]` is W^k (N_k×N_{k-1}); all row-major.
    pub w: Vec<Vec<f64>>,
    /// Input dimension.
    pub d: usize,
}

impl Theta {
    pub fn zeros(config: &ScalingConfig, d: usize) -> Self {
        let mut w = vec![vec![0.0; config.widths[0] * d]];
        for k in 1..config.depth() {
            w.push(vec![0.0; config.widths[k] * config.widths[k - 1]]);
        }
        Theta { c: vec![0.0; config.outputs * config.top_width()], w, d }
    }

    pub fn check_shape(&self, config: &ScalingConfig) -> Result<()> {
        let m = config.depth();
        if self.w.len() != m {
            return Err(Error::shape(format!("theta has {} weight layers, config depth {}", self.w.len(), m)));
        }
        if self.c.len() != config.outputs * config.top_width() {
            return Err(Error::shape(format!("C has {} entries, expected {}", self.c.len(), config.outputs * config.top_width())));
        }
        for k in 0..m {
            let cols = if k == 0 { self.d } else { config.widths[k - 1] };
            if self.w[k].len() != config.widths[k] * cols {
                return Err(Error::shape(format!("W{} has {} entries, expected {}", k + 1, self.w[k].len(), config.widths[k] * cols)));
            }
        }
        Ok(())
    }

    /// Row j of W¹.
    pub fn w1_row(&self, j: usize) -> &[f64] {
        &self.w[0][j * self.d..(j + 1) * self.d]
    }

    pub fn max_abs_c(&self) -> f64 {
        max_abs(&self.c)
    }

    /// Largest Euclidean norm of a W¹ row.
    pub fn max_norm_w1(&self) -> f64 {
        self.w[0].chunks(self.d.max(1)).map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max)
    }

    /// Largest |entry| over all inter-layer matrices W², ..., W^m.
    pub fn max_abs_inner(&self) -> f64 {
        self.w.iter().skip(1).map(|w| max_abs(w)).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.c) && self.w.iter().all(|w| all_finite(w))
    }
}

/// Largest |entry|, or NaN if any entry is NaN. Eight independent lanes so the loop vectorizes.
pub(crate) fn max_abs(v: &[f64]) -> f64 {
    let mut lanes = [0.0f64; 8];
    let mut nan = false;
    let chunks = v.chunks_exact(8);
    let tail = chunks.remainder();
    for c in chunks {
        for (l, x) in lanes.iter_mut().zip(c) {
            let a = x.abs();
            nan |= a.is_nan();
            *l = if a > *l { a } else { *l };
        }
    }
    for x in tail {
        let a = x.abs();
        nan |= a.is_nan();
        lanes[0] = if a > lanes[0] { a } else { lanes[0] };
    }
    if nan {
        f64::NAN
    } else {
        lanes.iter().fold(0.0, |m, &l| if l > m { l } else { m })
    }
}

/// True iff every entry is finite.
#[allow(clippy::eq_op)]
pub(crate) fn all_finite(v: &[f64]) -> bool {
    // x - x is 0 for finite x and NaN otherwise; eight lanes keep the sum vectorizable.
    let mut lanes = [0.0f64; 8];
    let chunks = v.chunks_exact(8);
    let tail = chunks.remainder();
    for c in chunks {
        for (l, x) in lanes.iter_mut().zip(c) {
            *l += x - x;
        }
    }
    tail.iter().chain(&lanes).all(|x| (x - x) == 0.0)
}

/// Every intermediate quantity of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `z[k]` holds the pre-activations of layer k+1.
    pub z: Vec<Vec<f64>>,
    /// `h[k] = σ(z[k])`.
    pub h: Vec<Vec<f64>>,
    /// Output per output unit.
    pub g: Vec<f64>,
}

impl ForwardTrace {
    /// Scalar output of a regression network.
    pub fn output(&self) -> f64 {
        self.g[0]
    }
}

/// Draws W¹ from the law's atoms, every W^k (k ≥ 2) entry from μ_{W²} and C from μ_C.
pub fn init_params(config: &ScalingConfig, law: &InitLaw, seed: u64) -> Result<Theta> {
    config.validate()?;
    law.validate()?;
    if law.n1() != config.widths[0] {
        return Err(Error::shape(format!("law has {} first-layer atoms, N1 = {}", law.n1(), config.widths[0])));
    }
    let d = law.dim();
    let mut theta = Theta::zeros(config, d);
    theta.w[0] = law.w1_atoms.iter().flatten().copied().collect();
    let mut rng = rng::stream(seed, streams::INIT);
    for k in 1..config.depth() {
        fill(&mut theta.w[k], &law.w2, &mut rng);
    }
    fill(&mut theta.c, &law.c, &mut rng);
    Ok(theta)
}

fn fill<R: Rng>(v: &mut [f64], law: &crate::law::ScalarLaw, rng: &mut R) {
    for x in v {
        *x = law.sample(rng);
    }
}

pub fn forward(config: &ScalingConfig, theta: &Theta, x: &[f64]) -> Result<ForwardTrace> {
    theta.check_shape(config)?;
    if x.len() != theta.d {
        return Err(Error::shape(format!("input has dimension {}, expected {}", x.len(), theta.d)));
    }
    Ok(forward_unchecked(config, theta, x))
}

pub(crate) fn forward_unchecked(config: &ScalingConfig, theta: &Theta, x: &[f64]) -> ForwardTrace {
    let act = config.activation;
    let m = config.depth();
    let mut z = Vec::with_capacity(m);
    let mut h: Vec<Vec<f64>> = Vec::with_capacity(m);
    let z1: Vec<f64> = theta.w[0].chunks(theta.d.max(1)).take(config.widths[0]).map(|row| dot(row, x)).collect();
    h.push(z1.iter().map(|&v| act.value(v)).collect());
    z.push(z1);
    for k in 1..m {
        let prev = &h[k - 1];
        let scale = config.norm(k);
        let zk: Vec<f64> = theta.w[k].chunks(prev.len()).map(|row| scale * dot(row, prev)).collect();
        h.push(zk.iter().map(|&v| act.value(v)).collect());
        z.push(zk);
    }
    let top = &h[m - 1];
    let scale = config.norm(m);
    let g = theta.c.chunks(top.len()).map(|row| scale * dot(row, top)).collect();
    ForwardTrace { z, h, g }
}

pub fn forward_batch(config: &ScalingConfig, theta: &Theta, xs: &[Vec<f64>]) -> Result<Vec<ForwardTrace>> {
    xs.iter().map(|x| forward(config, theta, x)).collect()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
