//! SGD recursions, trajectory recording and the one-step kernel decomposition.
//!
//! Every update line has the form rate × residual × ∂g/∂parameter, with all
//! right-hand sides evaluated at the pre-update parameters. The two-layer
//! scalar case has its own in-place kernel; deeper networks and mini-batches
//! go through a generic backward pass that accumulates increments first.

use std::io::Write;

use rand::RngExt;

use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::kernels::{Tape, TestFunction};
use crate::model::{all_finite, dot, forward_unchecked, max_abs, ScalingConfig, Theta};
use crate::rates::{rates_for, RateSchedule};
use crate::rng::{self, streams};

/// Default a-priori bound on parameter magnitudes.
pub const DEFAULT_PARAM_BOUND: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Loss {
    /// ½(y - g)², residual y - g.
    #[default]
    Quadratic,
    /// Softmax cross-entropy over the output units, residual onehot(y) - softmax(g).
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub scaling: ScalingConfig,
    pub rates: RateSchedule,
    /// Horizon T in scaled time t = k / N_m.
    pub horizon: f64,
    pub batch: usize,
    pub loss: Loss,
    /// Record every `stride` steps.
    pub stride: usize,
    pub seed: u64,
    /// Bound K on max(|C|, ‖W¹_j‖, |W^k|) over the run.
    pub param_bound: f64,
}

impl TrainConfig {
    /// Quadratic loss, batch 1, the schedule's own rates and 64 records per unit time.
    pub fn new(scaling: ScalingConfig, horizon: f64, seed: u64) -> Result<Self> {
        let rates = rates_for(&scaling)?;
        let stride = (scaling.top_width() / 64).max(1);
        Ok(TrainConfig { scaling, rates, horizon, batch: 1, loss: Loss::Quadratic, stride, seed, param_bound: DEFAULT_PARAM_BOUND })
    }

    /// ⌊N_m T⌋.
    pub fn total_steps(&self) -> usize {
        (self.scaling.top_width() as f64 * self.horizon).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.scaling.validate()?;
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::domain(format!("horizon T must be positive, got {}", self.horizon)));
        }
        if self.batch == 0 || self.stride == 0 {
            return Err(Error::domain("batch size and record stride must be positive"));
        }
        if self.rates.depth != self.scaling.depth() || self.rates.widths != self.scaling.widths {
            return Err(Error::shape("rate schedule does not match the network widths"));
        }
        if self.scaling.outputs > 1 && self.loss == Loss::Quadratic {
            return Err(Error::domain("quadratic loss needs a scalar output"));
        }
        Ok(())
    }
}

/// Largest increments of the last step, per group.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepInfo {
    pub max_delta_c: f64,
    /// Largest Euclidean norm of a W¹ row increment.
    pub max_delta_w1: f64,
    /// Largest |increment| over W², ..., W^m.
    pub max_delta_inner: f64,
}

/// A training target: a real value or a class label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Value(f64),
    Class(usize),
}

/// Reusable scratch for SGD steps.
#[derive(Debug, Clone)]
pub struct Stepper {
    config: ScalingConfig,
    rates: RateSchedule,
    loss: Loss,
    z: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
    s: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
    g: Vec<f64>,
    r: Vec<f64>,
    acc: Option<Theta>,
}

impl Stepper {
    pub fn new(config: &ScalingConfig, rates: &RateSchedule, loss: Loss) -> Self {
        let w = &config.widths;
        Stepper {
            config: config.clone(),
            rates: rates.clone(),
            loss,
            z: w.iter().map(|&n| vec![0.0; n]).collect(),
            h: w.iter().map(|&n| vec![0.0; n]).collect(),
            s: w.iter().map(|&n| vec![0.0; n]).collect(),
            delta: w.iter().map(|&n| vec![0.0; n]).collect(),
            g: vec![0.0; config.outputs],
            r: vec![0.0; config.outputs],
            acc: None,
        }
    }

    fn forward(&mut self, theta: &Theta, x: &[f64]) {
        let act = self.config.activation;
        let m = self.config.depth();
        for (j, row) in theta.w[0].chunks(theta.d).enumerate() {
            let z = dot(row, x);
            let (h, s) = act.value_first(z);
            self.z[0][j] = z;
            self.h[0][j] = h;
            self.s[0][j] = s;
        }
        for k in 1..m {
            let scale = self.config.norm(k);
            let (lo, hi) = self.h.split_at_mut(k);
            let prev = &lo[k - 1];
            for (i, row) in theta.w[k].chunks(prev.len()).enumerate() {
                let z = scale * dot(row, prev);
                let (h, s) = act.value_first(z);
                self.z[k][i] = z;
                hi[0][i] = h;
                self.s[k][i] = s;
            }
        }
        let scale = self.config.norm(m);
        let top = &self.h[m - 1];
        for (o, row) in theta.c.chunks(top.len()).enumerate() {
            self.g[o] = scale * dot(row, top);
        }
    }

    fn residual(&mut self, target: Target) -> Result<()> {
        match (self.loss, target) {
            (Loss::Quadratic, Target::Value(y)) => self.r[0] = y - self.g[0],
            (Loss::CrossEntropy, Target::Class(label)) => {
                if label >= self.g.len() {
                    return Err(Error::domain(format!("label {label} out of range for {} outputs", self.g.len())));
                }
                let max = self.g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let total: f64 = self.g.iter().map(|v| (v - max).exp()).sum();
                for (o, r) in self.r.iter_mut().enumerate() {
                    let p = (self.g[o] - max).exp() / total;
                    *r = f64::from(u8::from(o == label)) - p;
                }
            }
            _ => return Err(Error::domain("target kind does not match the loss")),
        }
        Ok(())
    }

    /// One SGD step on a batch, averaging the forcing over the batch.
    pub fn step(&mut self, theta: &mut Theta, batch: &[(&[f64], Target)], step: usize) -> Result<StepInfo> {
        if batch.is_empty() {
            return Err(Error::domain("empty batch"));
        }
        if batch.len() == 1 && self.config.depth() == 2 {
            let (x, target) = batch[0];
            self.forward(theta, x);
            self.residual(target)?;
            return self.apply_two_layer(theta, x, step);
        }
        let mut acc = self.acc.take().unwrap_or_else(|| Theta::zeros(&self.config, theta.d));
        acc.c.iter_mut().chain(acc.w.iter_mut().flatten()).for_each(|v| *v = 0.0);
        let weight = 1.0 / batch.len() as f64;
        for &(x, target) in batch {
            self.forward(theta, x);
            self.residual(target)?;
            self.accumulate(theta, x, weight, &mut acc);
        }
        let info = apply_increments(theta, &acc, step);
        self.acc = Some(acc);
        info
    }

    /// The three two-layer update lines, in place and simultaneous.
    fn apply_two_layer(&mut self, theta: &mut Theta, x: &[f64], step: usize) -> Result<StepInfo> {
        let (n1, n2) = (self.config.widths[0], self.config.widths[1]);
        let (norm1, norm2) = (self.config.norm(1), self.config.norm(2));
        let (rate_c, rate_w1, rate_w2) = (self.rates.c(), self.rates.w(1), self.rates.w(2));
        let outputs = self.config.outputs;
        let d = theta.d;
        let mut info = StepInfo::default();

        // e_i = Σ_o r_o C_{o,i} σ'(Z_i); for a scalar output this is r C_i σ'(Z_i).
        let (lo, hi) = self.delta.split_at_mut(1);
        let (b, e) = (&mut lo[0], &mut hi[0]);
        for i in 0..n2 {
            let mut acc = 0.0;
            for o in 0..outputs {
                acc += self.r[o] * theta.c[o * n2 + i];
            }
            e[i] = acc * self.s[1][i];
        }
        // b_j = Σ_i e_i W²_{ij}, from the old W²; the N₂^{-γ₂} factor is applied below.
        b.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n2 {
            let ei = e[i];
            if ei != 0.0 {
                for (bj, w) in b.iter_mut().zip(&theta.w[1][i * n1..(i + 1) * n1]) {
                    *bj += ei * w;
                }
            }
        }
        // W²_{ij} += α_{W2} / (N₁^{γ₁} N₂^{γ₂}) e_i H¹_j.
        // Rounding is monotone, so max_j |coef h_j| = |coef| max_j |h_j| exactly.
        let f2 = rate_w2 * norm1 * norm2;
        let h1 = &self.h[0];
        let h1_max = max_abs(h1);
        let mut coef_max: f64 = 0.0;
        for i in 0..n2 {
            let coef = f2 * e[i];
            coef_max = coef_max.max(coef.abs());
            for (w, hj) in theta.w[1][i * n1..(i + 1) * n1].iter_mut().zip(h1) {
                *w += coef * hj;
            }
        }
        info.max_delta_inner = coef_max * h1_max;
        // C_{o,i} += α_C / N₂^{γ₂} r_o H²_i.
        let fc = rate_c * norm2;
        let h2_max = max_abs(&self.h[1]);
        for o in 0..outputs {
            let coef = fc * self.r[o];
            for (c, h) in theta.c[o * n2..(o + 1) * n2].iter_mut().zip(&self.h[1]) {
                *c += coef * h;
            }
            info.max_delta_c = info.max_delta_c.max(coef.abs() * h2_max);
        }
        // W¹_j += α_{W1} / N₁^{γ₁} b_j σ'(W¹_j x) x.
        let f1 = rate_w1 * norm1 * norm2;
        for j in 0..n1 {
            let coef = f1 * b[j] * self.s[0][j];
            let mut sq = 0.0;
            for (w, xk) in theta.w[0][j * d..(j + 1) * d].iter_mut().zip(x) {
                let dw = coef * xk;
                *w += dw;
                sq += dw * dw;
            }
            info.max_delta_w1 = info.max_delta_w1.max(sq.sqrt());
        }
        check_finite(theta, step)?;
        Ok(info)
    }

    /// Adds weight × rate × r · ∂g/∂θ to `acc` by a backward pass.
    fn accumulate(&mut self, theta: &Theta, x: &[f64], weight: f64, acc: &mut Theta) {
        let m = self.config.depth();
        let nm = self.config.top_width();
        let norm_m = self.config.norm(m);
        let rate_c = self.rates.c() * weight;
        for o in 0..self.config.outputs {
            let coef = rate_c * norm_m * self.r[o];
            for (a, h) in acc.c[o * nm..(o + 1) * nm].iter_mut().zip(&self.h[m - 1]) {
                *a += coef * h;
            }
        }
        // δ_m,i = N_m^{-γ_m} Σ_o r_o C_{o,i} σ'(Z^m_i).
        for i in 0..nm {
            let mut s = 0.0;
            for o in 0..self.config.outputs {
                s += self.r[o] * theta.c[o * nm + i];
            }
            self.delta[m - 1][i] = norm_m * s * self.s[m - 1][i];
        }
        for k in (1..m).rev() {
            let rate = self.rates.w(k + 1) * weight;
            let norm_prev = self.config.norm(k);
            let n_prev = self.config.widths[k - 1];
            let (lo, hi) = self.delta.split_at_mut(k);
            let (delta_prev, delta_k) = (&mut lo[k - 1], &hi[0]);
            delta_prev.iter_mut().for_each(|v| *v = 0.0);
            for (i, &di) in delta_k.iter().enumerate() {
                let row = &theta.w[k][i * n_prev..(i + 1) * n_prev];
                let coef = rate * di * norm_prev;
                for (l, (a, w)) in acc.w[k][i * n_prev..(i + 1) * n_prev].iter_mut().zip(row).enumerate() {
                    *a += coef * self.h[k - 1][l];
                    delta_prev[l] += di * w;
                }
            }
            for (l, v) in delta_prev.iter_mut().enumerate() {
                *v *= norm_prev * self.s[k - 1][l];
            }
        }
        let rate = self.rates.w(1) * weight;
        let d = theta.d;
        for (j, &dj) in self.delta[0].iter().enumerate() {
            let coef = rate * dj;
            for (a, xk) in acc.w[0][j * d..(j + 1) * d].iter_mut().zip(x) {
                *a += coef * xk;
            }
        }
    }
}

fn apply_increments(theta: &mut Theta, acc: &Theta, step: usize) -> Result<StepInfo> {
    let mut info = StepInfo::default();
    for (c, dc) in theta.c.iter_mut().zip(&acc.c) {
        *c += dc;
    }
    info.max_delta_c = max_abs(&acc.c);
    let d = theta.d;
    for (w, dw) in theta.w[0].iter_mut().zip(&acc.w[0]) {
        *w += dw;
    }
    info.max_delta_w1 = acc.w[0].chunks(d).map(|r| dot(r, r).sqrt()).fold(0.0, f64::max);
    for (wk, dk) in theta.w.iter_mut().zip(&acc.w).skip(1) {
        for (w, dw) in wk.iter_mut().zip(dk) {
            *w += dw;
        }
        info.max_delta_inner = info.max_delta_inner.max(max_abs(dk));
    }
    check_finite(theta, step)?;
    Ok(info)
}

fn check_finite(theta: &Theta, step: usize) -> Result<()> {
    if !all_finite(&theta.c) {
        return Err(Error::NonFinite { group: "C".into(), step });
    }
    for (k, w) in theta.w.iter().enumerate() {
        if !all_finite(w) {
            return Err(Error::NonFinite { group: format!("W{}", k + 1), step });
        }
    }
    Ok(())
}

/// One two-layer quadratic step on a single sample.
pub fn sgd_step_two_layer(theta: &mut Theta, x: &[f64], y: f64, rates: &RateSchedule, scaling: &ScalingConfig) -> Result<StepInfo> {
    if scaling.depth() != 2 {
        return Err(Error::domain("two-layer step needs a depth-2 network"));
    }
    checked_step(theta, x, y, rates, scaling)
}

/// One three-layer quadratic step on a single sample.
pub fn sgd_step_three_layer(theta: &mut Theta, x: &[f64], y: f64, rates: &RateSchedule, scaling: &ScalingConfig) -> Result<StepInfo> {
    if scaling.depth() != 3 {
        return Err(Error::domain("three-layer step needs a depth-3 network"));
    }
    checked_step(theta, x, y, rates, scaling)
}

/// One quadratic step of any depth on a single sample.
pub fn sgd_step(theta: &mut Theta, x: &[f64], y: f64, rates: &RateSchedule, scaling: &ScalingConfig) -> Result<StepInfo> {
    checked_step(theta, x, y, rates, scaling)
}

fn checked_step(theta: &mut Theta, x: &[f64], y: f64, rates: &RateSchedule, scaling: &ScalingConfig) -> Result<StepInfo> {
    theta.check_shape(scaling)?;
    if x.len() != theta.d {
        return Err(Error::shape(format!("input has dimension {}, expected {}", x.len(), theta.d)));
    }
    if scaling.outputs != 1 {
        return Err(Error::domain("quadratic step needs a scalar output"));
    }
    Stepper::new(scaling, rates, Loss::Quadratic).step(theta, &[(x, Target::Value(y))], 0)
}

/// Recorded path of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Scaled times k / N_m of the records.
    pub t: Vec<f64>,
    /// Output unit 0 on every dataset point, per record.
    pub h: Vec<Vec<f64>>,
    pub max_abs_c: Vec<f64>,
    pub max_abs_w1: Vec<f64>,
    pub max_abs_w2: Vec<f64>,
    /// ⟨f, γ̃_k⟩ for each registered test function, per record.
    pub f_values: Vec<Vec<f64>>,
    /// Largest increments seen over the run.
    pub max_step: StepInfo,
    /// Largest parameter magnitudes over every step: (|C|, ‖W¹_j‖, |W^k|).
    pub max_params: [f64; 3],
    pub steps: usize,
    pub final_theta: Theta,
}

impl Trajectory {
    /// CSV with header `t,h_1..h_M,max_abs_C,max_abs_W1,max_abs_W2[,f_i...]`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let m = self.h.first().map_or(0, Vec::len);
        let nf = self.f_values.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=m).map(|i| format!("h_{i}")));
        header.extend(["max_abs_C", "max_abs_W1", "max_abs_W2"].map(String::from));
        header.extend((1..=nf).map(|i| format!("f_{i}")));
        w.write_record(&header)?;
        for k in 0..self.t.len() {
            let mut row = vec![self.t[k]];
            row.extend(&self.h[k]);
            row.extend([self.max_abs_c[k], self.max_abs_w1[k], self.max_abs_w2[k]]);
            row.extend(&self.f_values[k]);
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// ⟨f, γ̃⟩ = (1/N₂) Σ_i f(C_i, W²_{i,·}, W¹) for a two-layer scalar network.
pub fn empirical_average(tape: &Tape, theta: &Theta, n1: usize) -> Vec<f64> {
    let n2 = theta.c.len();
    let mut sums = vec![0.0; tape.roots()];
    let mut scratch = tape.scratch();
    for i in 0..n2 {
        let vals = tape.eval(&mut scratch, theta.c[i], &theta.w[1][i * n1..(i + 1) * n1], &theta.w[0]);
        for (s, v) in sums.iter_mut().zip(vals) {
            *s += v;
        }
    }
    sums.iter().map(|s| s / n2 as f64).collect()
}

/// Runs ⌊N_m T⌋ steps with samples drawn uniformly with replacement.
pub fn train(config: &TrainConfig, dataset: &Dataset, theta0: &Theta, observables: &[TestFunction]) -> Result<Trajectory> {
    config.validate()?;
    theta0.check_shape(&config.scaling)?;
    if dataset.is_empty() {
        return Err(Error::domain("dataset is empty"));
    }
    if dataset.dim() != theta0.d {
        return Err(Error::shape(format!("dataset dimension {} but theta expects {}", dataset.dim(), theta0.d)));
    }
    let targets: Vec<Target> = match (&dataset.targets, config.loss) {
        (Targets::Regression(y), Loss::Quadratic) => y.iter().map(|&v| Target::Value(v)).collect(),
        (Targets::Classes(l), Loss::CrossEntropy) => l.iter().map(|&v| Target::Class(v as usize)).collect(),
        _ => return Err(Error::domain("dataset targets do not match the loss")),
    };
    if !observables.is_empty() && (config.scaling.depth() != 2 || config.scaling.outputs != 1) {
        return Err(Error::domain("test-function averages need a two-layer scalar network"));
    }
    let tape = Tape::compile(observables);
    let n_m = config.scaling.top_width() as f64;
    let total = config.total_steps();
    let mut theta = theta0.clone();
    let mut stepper = Stepper::new(&config.scaling, &config.rates, config.loss);
    let mut rng = rng::stream(config.seed, streams::SAMPLING);
    let mut traj = Trajectory {
        t: Vec::new(),
        h: Vec::new(),
        max_abs_c: Vec::new(),
        max_abs_w1: Vec::new(),
        max_abs_w2: Vec::new(),
        f_values: Vec::new(),
        max_step: StepInfo::default(),
        max_params: [0.0; 3],
        steps: total,
        final_theta: Theta { c: Vec::new(), w: Vec::new(), d: 0 },
    };
    let record = |traj: &mut Trajectory, theta: &Theta, k: usize| {
        traj.t.push(k as f64 / n_m);
        traj.h.push(dataset.xs.iter().map(|x| forward_unchecked(&config.scaling, theta, x).g[0]).collect());
        traj.max_abs_c.push(theta.max_abs_c());
        traj.max_abs_w1.push(theta.max_norm_w1());
        traj.max_abs_w2.push(theta.max_abs_inner());
        let f = if observables.is_empty() { Vec::new() } else { empirical_average(&tape, theta, config.scaling.widths[0]) };
        traj.f_values.push(f);
    };
    let bound_check = |traj: &mut Trajectory, theta: &Theta| -> Result<()> {
        let vals = [theta.max_abs_c(), theta.max_norm_w1(), theta.max_abs_inner()];
        for ((m, v), name) in traj.max_params.iter_mut().zip(vals).zip(["C", "W1", "W2"]) {
            *m = m.max(v);
            if v > config.param_bound {
                return Err(Error::Bound { group: name.into(), value: v, bound: config.param_bound });
            }
        }
        Ok(())
    };
    record(&mut traj, &theta, 0);
    bound_check(&mut traj, &theta)?;
    let mut idx = vec![0usize; config.batch];
    for k in 1..=total {
        for i in idx.iter_mut() {
            *i = rng.random_range(0..dataset.len());
        }
        let batch: Vec<(&[f64], Target)> = idx.iter().map(|&i| (dataset.xs[i].as_slice(), targets[i])).collect();
        let info = stepper.step(&mut theta, &batch, k)?;
        traj.max_step.max_delta_c = traj.max_step.max_delta_c.max(info.max_delta_c);
        traj.max_step.max_delta_w1 = traj.max_step.max_delta_w1.max(info.max_delta_w1);
        traj.max_step.max_delta_inner = traj.max_step.max_delta_inner.max(info.max_delta_inner);
        bound_check(&mut traj, &theta)?;
        if k % config.stride == 0 || k == total {
            record(&mut traj, &theta, k);
        }
    }
    traj.final_theta = theta;
    Ok(traj)
}

/// Actual and kernel-predicted change of g on the dataset after one step on (x_k, y_k).
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionReport {
    pub actual: Vec<f64>,
    pub predicted: Vec<f64>,
    /// actual - predicted.
    pub residual: Vec<f64>,
    /// The C, W² and W¹ contributions to `predicted`.
    pub terms: [Vec<f64>; 3],
}

impl DecompositionReport {
    pub fn max_abs_residual(&self) -> f64 {
        max_abs(&self.residual)
    }
}

/// Compares g_{k+1} - g_k on every dataset point with the three empirical-measure kernel terms
///
/// (y - g(x_k)) [ α_C N₂^{1-2γ₂} ⟨B¹_{x,x_k}⟩ + α_{W2} N₁^{-2γ₁} N₂^{1-2γ₂} Σ_j ⟨B²ʲ_{x,x_k}⟩
///               + α_{W1} N₁^{-2γ₁} N₂^{2-2γ₂} Σ_j x·x_k ⟨B³ʲ_x⟩⟨B³ʲ_{x_k}⟩ ]
///
/// with ⟨·⟩ the average over the N₂ particles at step k.
pub fn one_step_decomposition_check(
    theta: &Theta,
    x_k: &[f64],
    y_k: f64,
    rates: &RateSchedule,
    scaling: &ScalingConfig,
    dataset: &Dataset,
) -> Result<DecompositionReport> {
    if scaling.depth() != 2 || scaling.outputs != 1 {
        return Err(Error::domain("decomposition needs a two-layer scalar network"));
    }
    theta.check_shape(scaling)?;
    let (n1, n2) = (scaling.widths[0], scaling.widths[1]);
    let (g1, g2) = (scaling.gammas[0], scaling.gammas[1]);
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let act = scaling.activation;
    let before: Vec<f64> = dataset.xs.iter().map(|x| forward_unchecked(scaling, theta, x).g[0]).collect();
    let mut next = theta.clone();
    sgd_step_two_layer(&mut next, x_k, y_k, rates, scaling)?;
    let after: Vec<f64> = dataset.xs.iter().map(|x| forward_unchecked(scaling, &next, x).g[0]).collect();

    let tk = forward_unchecked(scaling, theta, x_k);
    let r = y_k - tk.g[0];
    // Per-particle B³ʲ_{x_k} = C_i σ'(Z_i(x_k)) σ'(W¹_j x_k) W²_{ij}, averaged over i.
    let b3 = |tr: &crate::model::ForwardTrace| -> Vec<f64> {
        (0..n1)
            .map(|j| {
                let s1 = act.first(tr.z[0][j]);
                (0..n2).map(|i| theta.c[i] * act.first(tr.z[1][i]) * s1 * theta.w[1][i * n1 + j]).sum::<f64>() / n2f
            })
            .collect()
    };
    let b3k = b3(&tk);
    let f_c = rates.c() * n2f.powf(1.0 - 2.0 * g2);
    let f_w2 = rates.w(2) * n1f.powf(-2.0 * g1) * n2f.powf(1.0 - 2.0 * g2);
    let f_w1 = rates.w(1) * n1f.powf(-2.0 * g1) * n2f.powf(2.0 - 2.0 * g2);
    let mut terms = [Vec::new(), Vec::new(), Vec::new()];
    for x in &dataset.xs {
        let tx = forward_unchecked(scaling, theta, x);
        let b1 = (0..n2).map(|i| tx.h[1][i] * tk.h[1][i]).sum::<f64>() / n2f;
        let inner: f64 = (0..n1).map(|j| tx.h[0][j] * tk.h[0][j]).sum();
        let b2 = (0..n2).map(|i| theta.c[i] * theta.c[i] * act.first(tx.z[1][i]) * act.first(tk.z[1][i])).sum::<f64>() * inner / n2f;
        let b3x = b3(&tx);
        let xx = dot(x, x_k);
        let b3sum: f64 = b3x.iter().zip(&b3k).map(|(a, b)| xx * a * b).sum();
        terms[0].push(r * f_c * b1);
        terms[1].push(r * f_w2 * b2);
        terms[2].push(r * f_w1 * b3sum);
    }
    let predicted: Vec<f64> = (0..dataset.len()).map(|i| terms[0][i] + terms[1][i] + terms[2][i]).collect();
    let actual: Vec<f64> = after.iter().zip(&before).map(|(a, b)| a - b).collect();
    let residual = actual.iter().zip(&predicted).map(|(a, p)| a - p).collect();
    Ok(DecompositionReport { actual, predicted, residual, terms })
}
