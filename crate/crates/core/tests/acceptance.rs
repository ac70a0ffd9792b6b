//! Acceptance run: one PASS/FAIL line per criterion with the tolerances pinned below.
//!
//! `cargo test --release --test acceptance -- 3 7` runs a subset. The process fails only
//! when a criterion fails that is not listed in `KNOWN_FAILURES`.

#![allow(clippy::needless_range_loop)]

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scaled_nn::data::synth_dataset;
use scaled_nn::experiments::{accuracy_sweep, interpolate, load_mnist, mc_ensemble, normality_check, scaling_fit, variance, EnsembleSpec, SweepSpec};
use scaled_nn::kernels::{lambda_sq, min_eigenvalue, KernelSpec, TestFunction, Var};
use scaled_nn::limit_ode::{classify_regime, closed_form_errors, expansion_recursion, ExpansionEngine, Grid, LimitProblem};
use scaled_nn::trainer::{one_step_decomposition_check, sgd_step, TrainConfig};
use scaled_nn::{forward, init_params, rates_for, rates_general, rates_three_layer, rates_two_layer, Activation, InitLaw, ScalarLaw, ScalingConfig, Theta};

const ODE_TOL: f64 = 1e-8;
const CROSS_TOL: f64 = 1e-10;
const FD_TOL: f64 = 1e-6;
const FD_CONFIGS: usize = 100;
const CLT_VAR_TOL: f64 = 0.25;
const CLT_P_MIN: f64 = 0.01;
const SLOPE_TOL: f64 = 0.15;
const VAR_SE_MULT: f64 = 2.0;
const RESIDUAL_TOL: f64 = 1e-3;
const TRACK_SE_MULT: f64 = 3.0;
const TRACK_GAMMA2: f64 = 0.6;
const STEP_RATIO_BAND: (f64, f64) = (0.5, 2.0);

/// Criteria whose failure is analysed in the README; they still print FAIL.
const KNOWN_FAILURES: &[(usize, &str)] = &[
    (7, "the default problem has lambda_min(A) ~ 1.2e-3, so the residual decays like exp(-lambda_min t / M) and needs T in the thousands"),
    (9, "the remainder bound is not sharp; with symmetric C at initialization the remainder scales like N2^(gamma2-3.5)"),
    (10, "with pixels in [0,1] the first-layer step moves preactivations by ~|x|^2/N2 ~ 0.9 per step; large-gamma2 runs overshoot"),
];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn default_problem_law(n1: usize) -> InitLaw {
    InitLaw::rademacher(n1, 2, 0)
}

fn skewed_law(n1: usize, d: usize, seed: u64) -> InitLaw {
    let mut law = InitLaw::rademacher(n1, d, seed);
    law.c = ScalarLaw::two_point(2.0, 1.0);
    law.w2 = ScalarLaw::two_point(1.0, 0.5);
    law
}

fn c1_closed_forms() -> Outcome {
    let (eh, ek) = closed_form_errors().unwrap();
    outcome(eh < ODE_TOL && ek < ODE_TOL, format!("|h err| = {eh:.2e}, |K err| = {ek:.2e}, tol {ODE_TOL:e}"))
}

fn c2_cross_implementation() -> Outcome {
    let ds = synth_dataset(3, 2, 0).unwrap();
    let spec = KernelSpec::new(4, 0.7, Activation::Tanh);
    let p = LimitProblem::new(&ds, skewed_law(4, 2, 0), spec, Grid::new(1.0, 1e-3).unwrap()).unwrap();
    let h = p.h().unwrap();
    // Below the top order the corrections start from zero; the Gaussian enters only the top term.
    let zero = [0.0; 3];

    let r8 = classify_regime(0.8).unwrap();
    let lp = p.kernel_l_paths(&h).unwrap();
    let k8 = p.integrate_k(&r8, &h, Some(&lp), &zero).unwrap();
    let q1 = expansion_recursion(&p, &r8, &zero).unwrap().q[1].sup_diff(&k8);

    let r67 = classify_regime(6.0 / 7.0).unwrap();
    let k67 = p.integrate_k(&r67, &h, Some(&lp), &zero).unwrap();
    let big = p.kernel_big_l_paths(&h, &k67).unwrap();
    let psi = p.integrate_psi(&r67, Some((&h, &k67, &lp, &big)), &zero).unwrap();
    let e67 = expansion_recursion(&p, &r67, &zero).unwrap();
    let q2 = e67.q[2].sup_diff(&psi);

    let mut engine = ExpansionEngine::new(&p, &h);
    engine.push_q(k67.clone());
    let fs = [TestFunction::c(), spec.b1(&p.xs[0], &p.xs[1]), spec.b2(1, &p.xs[1], &p.xs[2]), spec.b3(2, &p.xs[0])];
    let (mut l1, mut l2) = (0.0f64, 0.0f64);
    for f in &fs {
        let sup = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        l1 = l1.max(sup(&engine.l(1, f).unwrap(), &p.integrate_l(f, &h).unwrap()));
        l2 = l2.max(sup(&engine.l(2, f).unwrap(), &p.integrate_big_l(f, &h, &k67).unwrap()));
    }
    let worst = q1.max(q2).max(l1).max(l2);
    outcome(
        worst < CROSS_TOL,
        format!(
            "sup|Q1-K| = {q1:.1e}, sup|Q2-Psi| = {q2:.1e}, sup|l1-l| = {l1:.1e}, sup|l2-L| = {l2:.1e} (|K| = {:.2e}, |Psi| = {:.2e})",
            k8.sup_norm(),
            psi.sup_norm()
        ),
    )
}

fn output(cfg: &ScalingConfig, theta: &Theta, x: &[f64]) -> f64 {
    forward(cfg, theta, x).unwrap().output()
}

/// Worst relative gap between one SGD update and rate * residual * central-difference gradient.
fn update_gap(cfg: &ScalingConfig, theta: &Theta, x: &[f64], y: f64) -> f64 {
    let rates = rates_for(cfg).unwrap();
    let r = y - output(cfg, theta, x);
    let mut next = theta.clone();
    sgd_step(&mut next, x, y, &rates, cfg).unwrap();
    let eps = 1e-6;
    let mut worst = 0.0f64;
    let mut probe = theta.clone();
    let mut check = |probe: &mut Theta, slot: fn(&mut Theta) -> &mut Vec<f64>, i: usize, rate: f64, delta: f64| {
        let orig = slot(probe)[i];
        slot(probe)[i] = orig + eps;
        let up = output(cfg, probe, x);
        slot(probe)[i] = orig - eps;
        let down = output(cfg, probe, x);
        slot(probe)[i] = orig;
        let expected = rate * r * (up - down) / (2.0 * eps);
        worst = worst.max((delta - expected).abs() / expected.abs().max(1e-8));
    };
    for i in 0..theta.c.len() {
        check(&mut probe, |t| &mut t.c, i, rates.c(), next.c[i] - theta.c[i]);
    }
    let layers: [fn(&mut Theta) -> &mut Vec<f64>; 3] = [|t| &mut t.w[0], |t| &mut t.w[1], |t| &mut t.w[2]];
    for k in 0..theta.w.len() {
        for i in 0..theta.w[k].len() {
            check(&mut probe, layers[k], i, rates.w(k + 1), next.w[k][i] - theta.w[k][i]);
        }
    }
    worst
}

fn uniform_law(n1: usize, d: usize, seed: u64) -> InitLaw {
    let mut law = InitLaw::rademacher(n1, d, seed);
    law.c = ScalarLaw::Uniform { lo: -1.0, hi: 1.0 };
    law.w2 = ScalarLaw::Uniform { lo: -1.0, hi: 1.0 };
    law
}

fn c3_gradient_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut sgd_worst, mut tf_worst) = (0.0f64, 0.0f64);
    let acts = [Activation::Tanh, Activation::Logistic];
    for trial in 0..FD_CONFIGS {
        let act = acts[trial % 2];
        let d = rng.random_range(1..4usize);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = rng.random_range(-1.0..1.0);
        let g = |rng: &mut ChaCha8Rng| 0.5 + 0.5 * rng.random::<f64>();
        let n = |rng: &mut ChaCha8Rng| rng.random_range(1..5usize);

        let two = ScalingConfig::two_layer(n(&mut rng), n(&mut rng), g(&mut rng), g(&mut rng)).unwrap().with_activation(act);
        let theta = init_params(&two, &uniform_law(two.widths[0], d, trial as u64), trial as u64).unwrap();
        sgd_worst = sgd_worst.max(update_gap(&two, &theta, &x, y));

        let three = ScalingConfig::three_layer([n(&mut rng), n(&mut rng), n(&mut rng)], [g(&mut rng), g(&mut rng), g(&mut rng)]).unwrap().with_activation(act);
        let theta = init_params(&three, &uniform_law(three.widths[0], d, trial as u64), trial as u64).unwrap();
        sgd_worst = sgd_worst.max(update_gap(&three, &theta, &x, y));

        // Kernel test functions and their first partials.
        let n1 = n(&mut rng);
        let spec = KernelSpec::new(n1, g(&mut rng), act);
        let xp: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let j = rng.random_range(0..n1);
        let c: f64 = rng.random_range(-1.0..1.0);
        let w2: Vec<f64> = (0..n1).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w1: Vec<f64> = (0..n1 * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut vars = vec![Var::C];
        vars.extend((0..n1).map(Var::W2));
        vars.extend((0..n1).flat_map(|j| (0..d).map(move |k| Var::W1(j, k))));
        for f in [spec.b1(&x, &xp), spec.b2(j, &x, &xp), spec.b3(j, &x)] {
            for &v in &vars {
                let exact = f.partial(v).unwrap().eval(c, &w2, &w1);
                let h = 1e-6;
                let shifted = |s: f64| {
                    let (mut c2, mut w22, mut w12) = (c, w2.clone(), w1.clone());
                    match v {
                        Var::C => c2 += s,
                        Var::W2(j) => w22[j] += s,
                        Var::W1(j, k) => w12[j * d + k] += s,
                    }
                    f.eval(c2, &w22, &w12)
                };
                let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                tf_worst = tf_worst.max((fd - exact).abs() / exact.abs().max(1e-4));
            }
        }
    }
    outcome(
        sgd_worst < FD_TOL && tf_worst < FD_TOL,
        format!("{FD_CONFIGS} configurations: worst update rel err {sgd_worst:.1e}, worst test-function rel err {tf_worst:.1e}, tol {FD_TOL:e}"),
    )
}

fn c4_clt_at_init() -> Outcome {
    let (n1, n2, g2, seeds) = (10, 4096, 0.75, 2000u64);
    let ds = synth_dataset(3, 2, 1).unwrap();
    let law = default_problem_law(n1);
    let cfg = ScalingConfig::two_layer(n1, n2, 1.0, g2).unwrap();
    let spec = KernelSpec::new(n1, 1.0, Activation::Tanh);
    let scale = (n2 as f64).powf(g2 - 0.5);
    let mut samples = vec![Vec::with_capacity(seeds as usize); ds.len()];
    for seed in 0..seeds {
        let theta = init_params(&cfg, &law, seed).unwrap();
        for (s, x) in samples.iter_mut().zip(&ds.xs) {
            s.push(scale * output(&cfg, &theta, x));
        }
    }
    let mut pass = true;
    let mut parts = Vec::new();
    for (s, x) in samples.iter().zip(&ds.xs) {
        let target = lambda_sq(x, &law, &spec).unwrap();
        let v = variance(s);
        let ks = normality_check(s, target).unwrap();
        let rel = (v / target - 1.0).abs();
        pass &= rel < CLT_VAR_TOL && ks.p_value > CLT_P_MIN;
        parts.push(format!("var {v:.4} vs lambda^2 {target:.4} ({:.1}%), KS p {:.3}", 100.0 * rel, ks.p_value));
    }
    outcome(pass, parts.join("; "))
}

fn c5_rate_law() -> Outcome {
    let ds = synth_dataset(3, 2, 1).unwrap();
    let law = default_problem_law(10);
    let p = LimitProblem::new(&ds, law.clone(), KernelSpec::new(10, 1.0, Activation::Tanh), Grid::new(1.0, 1e-3).unwrap()).unwrap();
    let h = p.h().unwrap();
    let n2s = [256usize, 1024, 4096];
    let mut pass = true;
    let mut parts = Vec::new();
    for g2 in [0.6, 0.8] {
        let mut devs = Vec::new();
        for &n2 in &n2s {
            let cfg = TrainConfig::new(ScalingConfig::two_layer(10, n2, 1.0, g2).unwrap(), 1.0, 0).unwrap();
            let st = mc_ensemble(&EnsembleSpec::new(cfg, law.clone(), 1000, 64), &ds).unwrap();
            devs.push(st.mean_sup_deviation(&h).unwrap().0);
        }
        let theory = -f64::min(1.0 - g2, g2 - 0.5);
        let fit = scaling_fit("sup_deviation", &n2s.map(|n| n as f64), &devs, theory, SLOPE_TOL).unwrap();
        pass &= fit.pass;
        parts.push(format!("gamma2 {g2}: slope {:.3} +/- {:.3} vs {theory:.2} (devs {:.4?})", fit.slope, fit.slope_se, devs));
    }
    outcome(pass, parts.join("; "))
}

fn c6_variance_monotone() -> Outcome {
    let ds = synth_dataset(3, 2, 1).unwrap();
    let law = default_problem_law(10);
    let gammas = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
    let mut vars = Vec::new();
    for g2 in gammas {
        let cfg = TrainConfig::new(ScalingConfig::two_layer(10, 1024, 1.0, g2).unwrap(), 1.0, 0).unwrap();
        let st = mc_ensemble(&EnsembleSpec::new(cfg, law.clone(), 1000, 64), &ds).unwrap();
        let i = st.t.len() - 1;
        vars.push((st.var[i].clone(), st.se_var[i].clone()));
    }
    let mut pass = true;
    let mut parts = Vec::new();
    for x in 0..ds.len() {
        let mut violations = 0;
        let mut within = true;
        for w in vars.windows(2) {
            let (v0, s0) = (w[0].0[x], w[0].1[x]);
            let (v1, s1) = (w[1].0[x], w[1].1[x]);
            if v1 > v0 {
                violations += 1;
                within &= v1 - v0 <= VAR_SE_MULT * s0.hypot(s1);
            }
        }
        pass &= violations == 0 || (violations == 1 && within);
        parts.push(format!("x{x}: {violations} violations, var {:.2e}..{:.2e}", vars[0].0[x], vars[5].0[x]));
    }
    outcome(pass, parts.join("; "))
}

fn c7_global_minimum() -> Outcome {
    let ds = synth_dataset(3, 2, 1).unwrap();
    let law = default_problem_law(10);
    let horizon = 50.0;
    let p = LimitProblem::new(&ds, law.clone(), KernelSpec::new(10, 1.0, Activation::Tanh), Grid::new(horizon, 1e-3).unwrap()).unwrap();
    let h = p.h().unwrap();
    let y = ds.ys().unwrap();
    let residual_at = |i: usize| y.iter().zip(h.at(i)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let residual = residual_at(h.grid.len() - 1);
    let decreasing = (1..h.grid.len()).all(|i| residual_at(i) <= residual_at(i - 1) + 1e-15);
    let lmin = min_eigenvalue(&p.a);

    // Below 3/4 the leading correction is the mean-zero Gaussian term; the deterministic
    // bias N2^{-(1-gamma2)} stays under the Monte Carlo error of 8 seeds.
    let cfg = TrainConfig::new(ScalingConfig::two_layer(10, 4096, 1.0, TRACK_GAMMA2).unwrap(), horizon, 0).unwrap();
    let st = mc_ensemble(&EnsembleSpec::new(cfg, law, 1000, 8), &ds).unwrap();
    let mut worst_z = 0.0f64;
    for t in [1.0, 5.0, 10.0, 25.0, 50.0] {
        let i = st.record_at(t);
        let lim = interpolate(&h, st.t[i]);
        for x in 0..ds.len() {
            worst_z = worst_z.max((st.mean[i][x] - lim[x]).abs() / st.se_mean[i][x]);
        }
    }
    let tracks = worst_z <= TRACK_SE_MULT;
    outcome(
        residual < RESIDUAL_TOL && tracks,
        format!(
            "residual at T=50 {residual:.3e} (tol {RESIDUAL_TOL:e}, monotone {decreasing}, lambda_min(A) {lmin:.3e}); SGD mean (gamma2 {TRACK_GAMMA2}, 8 seeds) vs limit worst {worst_z:.2} SE over t in {{1,5,10,25,50}} (tol {TRACK_SE_MULT})"
        ),
    )
}

fn c8_rate_reductions() -> Outcome {
    let grid = [0.5, 0.625, 0.75, 0.875, 1.0];
    let mut mismatches = 0;
    let mut checked = 0;
    for &a in &grid {
        for &b in &grid {
            checked += 1;
            if rates_general(&[7, 11], &[a, b]).unwrap() != rates_two_layer(7, 11, a, b, 1.0, 1.0, 1.0).unwrap() {
                mismatches += 1;
            }
            for &c in &grid {
                checked += 1;
                if rates_general(&[7, 11, 13], &[a, b, c]).unwrap() != rates_three_layer([7, 11, 13], [a, b, c], [1.0; 4]).unwrap() {
                    mismatches += 1;
                }
            }
        }
    }
    outcome(mismatches == 0, format!("{checked} schedules compared, {mismatches} mismatches"))
}

fn c9_step_decomposition() -> Outcome {
    let ds = synth_dataset(3, 2, 1).unwrap();
    let law = default_problem_law(10);
    let mut pass = true;
    let mut parts = Vec::new();
    for g2 in [0.6, 0.9] {
        let mean_residual = |n2: usize| {
            let cfg = ScalingConfig::two_layer(10, n2, 1.0, g2).unwrap();
            let rates = rates_for(&cfg).unwrap();
            let mut total = 0.0;
            let mut count = 0.0;
            for seed in 0..50u64 {
                let theta = init_params(&cfg, &law, seed).unwrap();
                for (x, y) in ds.xs.iter().zip(ds.ys().unwrap()) {
                    total += one_step_decomposition_check(&theta, x, *y, &rates, &cfg, &ds).unwrap().max_abs_residual();
                    count += 1.0;
                }
            }
            total / count
        };
        let ratio = mean_residual(400) / mean_residual(100);
        let expected = 4f64.powf(-(1.0 + g2));
        let ok = ratio >= STEP_RATIO_BAND.0 * expected && ratio <= STEP_RATIO_BAND.1 * expected;
        pass &= ok;
        parts.push(format!(
            "gamma2 {g2}: ratio {ratio:.4e} vs 4^-(1+gamma2) = {expected:.4e} ({:.2}x); fitted exponent {:.2}, sharp order gamma2-3.5 = {:.2}",
            ratio / expected,
            ratio.log(4.0),
            g2 - 3.5
        ));
    }
    outcome(pass, parts.join("; "))
}

fn mnist_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

fn c10_mnist_ordering() -> Outcome {
    let dir = mnist_dir();
    let train = load_mnist(&dir.join("train-images-idx3-ubyte"), &dir.join("train-labels-idx1-ubyte"), Some(5000), 0).unwrap();
    let test = load_mnist(&dir.join("t10k-images-idx3-ubyte"), &dir.join("t10k-labels-idx1-ubyte"), Some(1000), 0).unwrap();
    let spec = SweepSpec { widths: vec![100, 100], batch: 20, epochs: 5, seeds: vec![0, 1, 2], law_seed: 0 };
    let final_acc = |g1: f64, g2: f64| accuracy_sweep(&train, &test, &spec, &[g1, g2]).unwrap().last().unwrap().test_acc;
    let by_g2: Vec<f64> = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0].iter().map(|&g2| final_acc(1.0, g2)).collect();
    let by_g1: Vec<f64> = [0.5, 0.6, 0.7, 0.8, 0.9].iter().map(|&g1| final_acc(g1, 1.0)).chain([by_g2[5]]).collect();
    let spread = |v: &[f64]| v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
    let increasing = by_g2.windows(2).all(|w| w[1] > w[0]);
    let (s1, s2) = (spread(&by_g1), spread(&by_g2));
    outcome(
        increasing && s1 < s2,
        format!("test acc over gamma2 0.5..1 {by_g2:.3?} (strictly increasing {increasing}); over gamma1 0.5..1 {by_g1:.3?}; spread gamma1 {s1:.3} vs gamma2 {s2:.3}"),
    )
}

type Criterion = (usize, &'static str, Duration, fn() -> Outcome);

fn main() {
    let minutes = |m: u64| Duration::from_secs(60 * m);
    let criteria: [Criterion; 10] = [
        (1, "closed-form ODE oracle", Duration::from_secs(1), c1_closed_forms),
        (2, "cross-implementation equality", minutes(1), c2_cross_implementation),
        (3, "gradient fidelity", minutes(1), c3_gradient_fidelity),
        (4, "CLT at initialization", minutes(5), c4_clt_at_init),
        (5, "convergence-rate law", minutes(20), c5_rate_law),
        (6, "variance monotone in gamma2", minutes(15), c6_variance_monotone),
        (7, "global minimum", minutes(10), c7_global_minimum),
        (8, "learning-rate reductions", Duration::from_secs(1), c8_rate_reductions),
        (9, "one-step decomposition", minutes(1), c9_step_decomposition),
        (10, "MNIST qualitative ordering", minutes(60), c10_mnist_ordering),
    ];
    // libtest flags such as --nocapture may be forwarded; only bare numbers select criteria.
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = Vec::new();
    for (id, name, budget, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let pass = out.pass && elapsed <= budget;
        println!("{} {id:>2} {name}: {} [{:.1?} of {:?}]", if pass { "PASS" } else { "FAIL" }, out.detail, elapsed, budget);
        if !pass {
            match KNOWN_FAILURES.iter().find(|(k, _)| *k == id) {
                Some((_, why)) => println!("        known: {why}"),
                None => unexpected.push(id),
            }
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
