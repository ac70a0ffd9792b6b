//! Sample statistics, power-law fits and the Kolmogorov–Smirnov normality test.

use std::io::Write;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample variance.
pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}

pub fn se_mean(v: &[f64]) -> f64 {
    (variance(v) / v.len() as f64).sqrt()
}

/// Jackknife standard error of the unbiased variance.
pub fn jackknife_se_variance(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 3 {
        return f64::NAN;
    }
    let nf = n as f64;
    let (s1, s2): (f64, f64) = v.iter().fold((0.0, 0.0), |(a, b), x| (a + x, b + x * x));
    let loo: Vec<f64> = v
        .iter()
        .map(|x| {
            let (a, b) = (s1 - x, s2 - x * x);
            let m = a / (nf - 1.0);
            (b - (nf - 1.0) * m * m) / (nf - 2.0)
        })
        .collect();
    let bar = mean(&loo);
    ((nf - 1.0) / nf * loo.iter().map(|l| (l - bar) * (l - bar)).sum::<f64>()).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFitReport {
    pub quantity: String,
    pub n2: Vec<f64>,
    pub values: Vec<f64>,
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    /// Expected log–log slope.
    pub theory: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Least squares of log value on log N₂; passes iff |slope - theory| ≤ tolerance.
// The negated comparisons reject NaN as well.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn scaling_fit(quantity: &str, n2: &[f64], values: &[f64], theory: f64, tolerance: f64) -> Result<ScalingFitReport> {
    if n2.len() != values.len() || n2.len() < 3 {
        return Err(Error::domain("a scaling fit needs at least three (N2, value) pairs"));
    }
    let (lo, hi) = n2.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    if !(lo > 0.0) || hi / lo < 10.0 {
        return Err(Error::domain("the N2 grid must span at least one decade"));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::domain(format!("cannot fit a power law through the value {v}")));
    }
    let xs: Vec<f64> = n2.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let (mx, my) = (mean(&xs), mean(&ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let n = xs.len() as f64;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let slope_se = if n > 2.0 { (rss / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    Ok(ScalingFitReport {
        quantity: quantity.to_string(),
        n2: n2.to_vec(),
        values: values.to_vec(),
        slope,
        slope_se,
        intercept,
        theory,
        tolerance,
        pass: (slope - theory).abs() <= tolerance,
    })
}

/// CSV `quantity,slope,slope_se,theory,tolerance,pass`, one row per report.
pub fn write_fit_csv<W: Write>(out: W, reports: &[ScalingFitReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["quantity", "slope", "slope_se", "theory", "tolerance", "pass"])?;
    for r in reports {
        w.write_record([r.quantity.clone(), r.slope.to_string(), r.slope_se.to_string(), r.theory.to_string(), r.tolerance.to_string(), r.pass.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsReport {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Minimum sample size for [`normality_check`].
pub const KS_MIN_SAMPLES: usize = 500;

/// P(K > λ) for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// KS test against N(0, target_var), asymptotic p-value with Stephens' small-sample correction.
pub fn normality_check(samples: &[f64], target_var: f64) -> Result<KsReport> {
    if samples.len() < KS_MIN_SAMPLES {
        return Err(Error::domain(format!("normality check needs at least {KS_MIN_SAMPLES} samples, got {}", samples.len())));
    }
    if !(target_var > 0.0 && target_var.is_finite()) {
        return Err(Error::domain(format!("target variance must be positive, got {target_var}")));
    }
    let normal = Normal::new(0.0, target_var.sqrt()).map_err(|e| Error::domain(e.to_string()))?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let f = normal.cdf(*x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let sqrt_n = n.sqrt();
    let p = kolmogorov_survival((sqrt_n + 0.12 + 0.11 / sqrt_n) * d);
    Ok(KsReport { statistic: d, p_value: p, n: sorted.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn moments() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&v), 2.5);
        assert!((variance(&v) - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(variance(&[2.0; 5]), 0.0);
        assert_eq!(jackknife_se_variance(&[2.0; 5]), 0.0);
    }

    /// Jackknife of the variance against the direct leave-one-out recomputation.
    #[test]
    fn jackknife_matches_direct() {
        let v = [0.3, -1.2, 2.2, 0.9, -0.4, 1.7];
        let n = v.len() as f64;
        let loo: Vec<f64> = (0..v.len()).map(|i| variance(&[&v[..i], &v[i + 1..]].concat())).collect();
        let bar = mean(&loo);
        let direct = ((n - 1.0) / n * loo.iter().map(|l| (l - bar).powi(2)).sum::<f64>()).sqrt();
        assert!((jackknife_se_variance(&v) - direct).abs() < 1e-12);
    }

    #[test]
    fn power_law_fits() {
        let n2 = [256.0, 1024.0, 4096.0];
        let v: Vec<f64> = n2.iter().map(|n: &f64| 3.0 * n.powf(-0.3)).collect();
        let r = scaling_fit("x", &n2, &v, -0.3, 0.01).unwrap();
        assert!((r.slope + 0.3).abs() < 1e-12 && r.pass);
        let r = scaling_fit("x", &n2, &[2.0; 3], 0.0, 1e-12).unwrap();
        assert!(r.slope.abs() < 1e-12);
        assert!(scaling_fit("x", &n2, &[1.0, 0.0, 1.0], 0.0, 1.0).is_err());
        assert!(scaling_fit("x", &[1.0, 2.0, 4.0], &[1.0; 3], 0.0, 1.0).is_err());
        assert!(scaling_fit("x", &n2[..2], &v[..2], 0.0, 1.0).is_err());
        let mut buf = Vec::new();
        write_fit_csv(&mut buf, &[r]).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("quantity,slope,slope_se,theory,tolerance,pass\nx,"));
    }

    #[test]
    fn kolmogorov_tail_values() {
        // Standard critical values of the limiting distribution.
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_survival(1.6276) - 0.01).abs() < 1e-4);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
    }

    #[test]
    fn ks_calibration() {
        let mut passes = 0;
        for rep in 0..200 {
            let mut r = rng::stream(rep, 99);
            let s: Vec<f64> = (0..1000)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut r);
                    2.0 * z
                })
                .collect();
            if normality_check(&s, 4.0).unwrap().p_value > 0.01 {
                passes += 1;
            }
        }
        assert!(passes >= 196, "{passes}");
        assert!(normality_check(&vec![0.0; 1000], 1.0).unwrap().p_value < 1e-6);
        assert!(normality_check(&[0.0; 10], 1.0).is_err());
        assert!(normality_check(&vec![0.0; 1000], 0.0).is_err());
    }

    proptest! {
        #[test]
        fn fit_recovers_any_exponent(e in -2.0f64..2.0, c in 0.1f64..10.0) {
            let n2 = [100.0, 400.0, 1600.0, 6400.0];
            let v: Vec<f64> = n2.iter().map(|n: &f64| c * n.powf(e)).collect();
            let r = scaling_fit("q", &n2, &v, e, 1e-9).unwrap();
            prop_assert!(r.pass);
        }
    }
}
