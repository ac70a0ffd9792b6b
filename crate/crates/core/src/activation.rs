//! Smooth bounded activations with derivatives of any order.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Bounded smooth nonlinearity σ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Activation {
    /// Hyperbolic tangent.
    #[default]
    Tanh,
    /// Logistic sigmoid shifted to mean-zero output, 1/(1+e^{-x}) - 1/2.
    Logistic,
}

impl Activation {
    #[inline]
    pub fn value(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Logistic => 0.5 * (0.5 * x).tanh(),
        }
    }

    #[inline]
    pub fn first(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Logistic => {
                let t = (0.5 * x).tanh();
                0.25 * (1.0 - t * t)
            }
        }
    }

    /// Value and first derivative in one evaluation.
    #[inline]
    pub fn value_first(self, x: f64) -> (f64, f64) {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                (t, 1.0 - t * t)
            }
            Activation::Logistic => {
                let t = (0.5 * x).tanh();
                (0.5 * t, 0.25 * (1.0 - t * t))
            }
        }
    }

    /// The `order`-th derivative at `x` (order 0 is the value).
    pub fn deriv(self, x: f64, order: u32) -> f64 {
        match order {
            0 => self.value(x),
            1 => self.first(x),
            _ => match self {
                Activation::Tanh => tanh_deriv(x, order),
                Activation::Logistic => 0.5f64.powi(order as i32 + 1) * tanh_deriv(0.5 * x, order),
            },
        }
    }

    /// sup over the reals of |σ|.
    pub fn sup(self) -> f64 {
        match self {
            Activation::Tanh => 1.0,
            Activation::Logistic => 0.5,
        }
    }

    /// sup over the reals of |σ'|.
    pub fn sup_first(self) -> f64 {
        match self {
            Activation::Tanh => 1.0,
            Activation::Logistic => 0.25,
        }
    }
}

/// d^n/dx^n tanh(x) as a polynomial in t = tanh(x): P_{n+1}(t) = P_n'(t)(1 - t^2).
fn tanh_deriv(x: f64, order: u32) -> f64 {
    const CAP: usize = 32;
    assert!((order as usize) < CAP - 1, "tanh derivative order {order} exceeds {}", CAP - 2);
    let t = x.tanh();
    let mut coeffs = [0.0; CAP];
    coeffs[1] = 1.0;
    for n in 0..order as usize {
        let deg = n + 1;
        let mut next = [0.0; CAP];
        for k in 1..=deg {
            let d = k as f64 * coeffs[k];
            next[k - 1] += d;
            next[k + 1] -= d;
        }
        coeffs = next;
    }
    coeffs[..order as usize + 2].iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Tanh => write!(f, "tanh"),
            Activation::Logistic => write!(f, "logistic"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "logistic" => Ok(Activation::Logistic),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }
}
