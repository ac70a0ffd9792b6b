//! Layer-wise learning rates.
//!
//! Every rate is α·Π_i N_i^{e_i} with rational exponents e_i. Exponents are
//! kept symbolic so that the depth-2 and depth-3 specializations can be compared
//! with the general ladder exactly, and are exponentiated once at the end.

use std::fmt;

use num_rational::Rational64;

use crate::error::{Error, Result};
use crate::model::{check_gamma, ScalingConfig};

const MAX_DENOMINATOR: i64 = 1_000_000;

/// Rate of one parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct RateGroup {
    /// "C", "W1", "W2", ...
    pub label: String,
    /// Exponent on N_1..N_m.
    pub exponents: Vec<Rational64>,
    /// Base constant α.
    pub base: f64,
    /// α·Π N_i^{e_i}.
    pub value: f64,
}

/// Learning rates for every parameter group of a depth-m network.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSchedule {
    pub depth: usize,
    pub widths: Vec<usize>,
    /// Groups in order C, W1, ..., Wm.
    pub groups: Vec<RateGroup>,
}

impl RateSchedule {
    fn build(widths: &[usize], exponents: Vec<(String, Vec<Rational64>)>, alphas: &[f64]) -> Result<Self> {
        if alphas.len() != exponents.len() {
            return Err(Error::shape(format!("expected {} rate constants, got {}", exponents.len(), alphas.len())));
        }
        if let Some(a) = alphas.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(Error::domain(format!("rate constant {a} must be non-negative")));
        }
        if let Some(i) = widths.iter().position(|&n| n == 0) {
            return Err(Error::domain(format!("width N{} must be at least 1", i + 1)));
        }
        let groups = exponents
            .into_iter()
            .zip(alphas)
            .map(|((label, exponents), &base)| {
                let value = base * widths.iter().zip(&exponents).map(|(&n, e)| (n as f64).powf(ratio_f64(*e))).product::<f64>();
                RateGroup { label, exponents, base, value }
            })
            .collect();
        Ok(RateSchedule { depth: widths.len(), widths: widths.to_vec(), groups })
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.groups.iter().find(|g| g.label == label).map(|g| g.value)
    }

    /// Rate of the outer weights C.
    pub fn c(&self) -> f64 {
        self.groups[0].value
    }

    /// Rate of W^k (1-based).
    pub fn w(&self, k: usize) -> f64 {
        self.groups[k].value
    }

    /// Same exponents with every rate multiplied by zero.
    pub fn zeroed(&self) -> Self {
        let mut out = self.clone();
        for g in &mut out.groups {
            g.base = 0.0;
            g.value = 0.0;
        }
        out
    }

    /// One "group=value" line per group.
    pub fn canonical_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for RateSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for g in &self.groups {
            writeln!(f, "{}={:e}", g.label, g.value)?;
        }
        Ok(())
    }
}

fn ratio_f64(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// The closest rational with denominator at most 10⁶, which recovers decimal inputs such as 0.6 as 3/5.
pub fn gamma_ratio(gamma: f64) -> Result<Rational64> {
    if !gamma.is_finite() {
        return Err(Error::domain(format!("gamma {gamma} is not finite")));
    }
    // Continued-fraction convergents until the denominator cap or an exact hit.
    let (mut p0, mut q0, mut p1, mut q1) = (0i64, 1i64, 1i64, 0i64);
    let mut x = gamma;
    for _ in 0..64 {
        let a = x.floor();
        let ai = a as i64;
        let (p2, q2) = (ai * p1 + p0, ai * q1 + q0);
        if q2 > MAX_DENOMINATOR {
            break;
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        let frac = x - a;
        if (p1 as f64 / q1 as f64 - gamma).abs() <= 1e-15 * gamma.abs().max(1.0) || frac == 0.0 {
            break;
        }
        x = 1.0 / frac;
    }
    Ok(Rational64::new(p1, q1))
}

fn ratios(gammas: &[f64]) -> Result<Vec<Rational64>> {
    gammas
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            check_gamma(i + 1, g)?;
            gamma_ratio(g)
        })
        .collect()
}

fn int(v: i64) -> Rational64 {
    Rational64::from_integer(v)
}

/// Two-layer rates: α_C N₂^{2γ₂-2}, α_{W1} N₁^{2γ₁-1} N₂^{2γ₂-3}, α_{W2} N₁^{2γ₁-1} N₂^{2γ₂-2}.
pub fn rates_two_layer(n1: usize, n2: usize, gamma1: f64, gamma2: f64, alpha_c: f64, alpha_w1: f64, alpha_w2: f64) -> Result<RateSchedule> {
    let g = ratios(&[gamma1, gamma2])?;
    let two = int(2);
    let exps = vec![
        ("C".to_string(), vec![int(0), two * g[1] - int(2)]),
        ("W1".to_string(), vec![two * g[0] - int(1), two * g[1] - int(3)]),
        ("W2".to_string(), vec![two * g[0] - int(1), two * g[1] - int(2)]),
    ];
    RateSchedule::build(&[n1, n2], exps, &[alpha_c, alpha_w1, alpha_w2])
}

/// Three-layer rates, base constants in order C, W1, W2, W3.
pub fn rates_three_layer(n: [usize; 3], gamma: [f64; 3], alphas: [f64; 4]) -> Result<RateSchedule> {
    let g = ratios(&gamma)?;
    let two = int(2);
    let exps = vec![
        ("C".to_string(), vec![int(0), int(0), two * g[2] - int(2)]),
        ("W1".to_string(), vec![two * g[0] - int(1), two * g[1] - int(2), two * g[2] - int(3)]),
        ("W2".to_string(), vec![two * g[0] - int(1), two * g[1] - int(1), two * g[2] - int(3)]),
        ("W3".to_string(), vec![int(0), two * g[1] - int(1), two * g[2] - int(2)]),
    ];
    RateSchedule::build(&n, exps, &alphas)
}

/// The general ladder with unit base constants.
pub fn rates_general(widths: &[usize], gammas: &[f64]) -> Result<RateSchedule> {
    rates_general_with(widths, gammas, &vec![1.0; widths.len() + 1])
}

/// The general ladder. The rate of W^{N_k} (k = 0..m, W^{N_m} = C, W^{N_0} = W¹)
/// carries exponent 2γ_i - e_{k,i} on N_i for i ≥ max(k,1), where
/// e_{k,i} = (1 if i ≤ k+1 else 2) + (1 if i = m).
pub fn rates_general_with(widths: &[usize], gammas: &[f64], alphas: &[f64]) -> Result<RateSchedule> {
    let m = widths.len();
    if m < 2 {
        return Err(Error::domain(format!("general rates need depth at least 2, got {m}")));
    }
    if gammas.len() != m {
        return Err(Error::shape(format!("{} widths but {} gammas", m, gammas.len())));
    }
    let g = ratios(gammas)?;
    let exponent = |k: usize| -> Vec<Rational64> {
        (1..=m)
            .map(|i| {
                if i < k.max(1) {
                    return int(0);
                }
                let e = if i <= k + 1 { 1 } else { 2 } + i64::from(i == m);
                int(2) * g[i - 1] - int(e)
            })
            .collect()
    };
    let mut exps = vec![("C".to_string(), exponent(m))];
    for k in 0..m {
        exps.push((format!("W{}", k + 1), exponent(k)));
    }
    RateSchedule::build(widths, exps, alphas)
}

/// Rates for a network configuration: the specialized formulas at depth 2 and 3, the ladder beyond.
pub fn rates_for(config: &ScalingConfig) -> Result<RateSchedule> {
    config.validate()?;
    let (n, g, a) = (&config.widths, &config.gammas, &config.alphas);
    match config.depth() {
        2 => rates_two_layer(n[0], n[1], g[0], g[1], a[0], a[1], a[2]),
        3 => rates_three_layer([n[0], n[1], n[2]], [g[0], g[1], g[2]], [a[0], a[1], a[2], a[3]]),
        _ => rates_general_with(n, g, a),
    }
}
