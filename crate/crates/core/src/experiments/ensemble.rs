//! Monte Carlo ensembles of independent training runs.

use std::io::Write;

use rayon::prelude::*;

use super::stats::{jackknife_se_variance, mean, se_mean, variance};
use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::law::InitLaw;
use crate::limit_ode::OdeState;
use crate::model::{forward_batch, init_params};
use crate::trainer::{train, TrainConfig};

/// One training run per seed: the seed drives both initialization and sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub config: TrainConfig,
    pub law: InitLaw,
    pub seeds: Vec<u64>,
    /// Times at which raw per-seed outputs are kept.
    pub marks: Vec<f64>,
}

impl EnsembleSpec {
    /// Seeds `first..first + count`.
    pub fn new(config: TrainConfig, law: InitLaw, first: u64, count: usize) -> Self {
        EnsembleSpec { config, law, seeds: (first..first + count as u64).collect(), marks: Vec::new() }
    }

    pub fn with_marks(mut self, marks: Vec<f64>) -> Self {
        self.marks = marks;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.len() < 2 {
            return Err(Error::domain(format!("an ensemble needs at least two seeds, got {}", self.seeds.len())));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::domain(format!("seed {} is repeated", w[0])));
        }
        Ok(())
    }
}

/// Per-time statistics of h_t(x) over the seeds, all indexed `[record][point]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub seeds: Vec<u64>,
    pub t: Vec<f64>,
    pub mean: Vec<Vec<f64>>,
    /// Unbiased variance.
    pub var: Vec<Vec<f64>>,
    pub se_mean: Vec<Vec<f64>>,
    /// Jackknife standard error of `var`.
    pub se_var: Vec<Vec<f64>>,
    /// Record times actually used for each requested mark.
    pub mark_times: Vec<f64>,
    /// `[mark][seed][point]`.
    pub samples: Vec<Vec<Vec<f64>>>,
    /// `[seed][record][point]`.
    pub paths: Vec<Vec<Vec<f64>>>,
}

impl EnsembleStats {
    /// Index of the record closest to `t`.
    pub fn record_at(&self, t: f64) -> usize {
        nearest(&self.t, t)
    }

    /// Values of point `x` across seeds at record `i`.
    pub fn column(&self, i: usize, x: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p[i][x]).collect()
    }

    /// Rows `n2,gamma2,t,mean,var,se` for data point `x`; `se` is the standard error of the mean.
    pub fn scaling_rows(&self, n2: usize, gamma2: f64, x: usize) -> Vec<ScalingRow> {
        (0..self.t.len()).map(|i| ScalingRow { n2, gamma2, t: self.t[i], mean: self.mean[i][x], var: self.var[i][x], se: self.se_mean[i][x] }).collect()
    }

    /// Mean over seeds of sup_{t,x} |h_t(x) - limit_t(x)|, with its standard error.
    /// The limit path is interpolated linearly onto the record times.
    pub fn mean_sup_deviation(&self, limit: &OdeState) -> Result<(f64, f64)> {
        let horizon = limit.grid.horizon();
        if self.t.last().is_some_and(|&t| t > horizon + 1e-12) {
            return Err(Error::domain(format!("limit path ends at {horizon}, ensemble runs to {}", self.t[self.t.len() - 1])));
        }
        let reference: Vec<Vec<f64>> = self.t.iter().map(|&t| interpolate(limit, t)).collect();
        let sups: Vec<f64> =
            self.paths.iter().map(|p| p.iter().zip(&reference).flat_map(|(h, r)| h.iter().zip(r).map(|(a, b)| (a - b).abs())).fold(0.0, f64::max)).collect();
        Ok((mean(&sups), se_mean(&sups)))
    }
}

fn nearest(ts: &[f64], t: f64) -> usize {
    let mut best = 0;
    for (i, v) in ts.iter().enumerate() {
        if (v - t).abs() < (ts[best] - t).abs() {
            best = i;
        }
    }
    best
}

/// Linear interpolation of an ODE path at time t.
pub fn interpolate(path: &OdeState, t: f64) -> Vec<f64> {
    let dt = path.grid.dt;
    let last = path.values.len() - 1;
    let pos = (t / dt).clamp(0.0, last as f64);
    let i = (pos.floor() as usize).min(last.saturating_sub(1));
    let w = if last == 0 { 0.0 } else { pos - i as f64 };
    let (a, b) = (&path.values[i], &path.values[(i + 1).min(last)]);
    a.iter().zip(b).map(|(u, v)| u + w * (v - u)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingRow {
    pub n2: usize,
    pub gamma2: f64,
    pub t: f64,
    pub mean: f64,
    pub var: f64,
    pub se: f64,
}

pub fn write_scaling_csv<W: Write>(out: W, rows: &[ScalingRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n2", "gamma2", "t", "mean", "var", "se"])?;
    for r in rows {
        w.write_record([r.n2.to_string(), r.gamma2.to_string(), r.t.to_string(), r.mean.to_string(), r.var.to_string(), r.se.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Record times and the member's outputs indexed `[record][point]`.
type MemberRun = (Vec<f64>, Vec<Vec<f64>>);

fn run_member(spec: &EnsembleSpec, dataset: &Dataset, seed: u64) -> Result<MemberRun> {
    let mut config = spec.config.clone();
    config.seed = seed;
    let theta0 = init_params(&config.scaling, &spec.law, seed)?;
    if config.horizon == 0.0 {
        let h0 = forward_batch(&config.scaling, &theta0, &dataset.xs)?.iter().map(|tr| tr.output()).collect();
        return Ok((vec![0.0], vec![h0]));
    }
    let traj = train(&config, dataset, &theta0, &[])?;
    Ok((traj.t, traj.h))
}

/// Runs every seed in parallel and reduces in seed order, so the statistics
/// do not depend on the thread schedule. A horizon of 0 only evaluates h₀.
pub fn mc_ensemble(spec: &EnsembleSpec, dataset: &Dataset) -> Result<EnsembleStats> {
    spec.validate()?;
    if let Targets::Regression(_) = dataset.targets {
        dataset.check_distinct_directions()?;
    }
    let runs: Vec<Result<MemberRun>> = spec.seeds.par_iter().map(|&s| run_member(spec, dataset, s)).collect();
    let mut t = Vec::new();
    let mut paths = Vec::with_capacity(runs.len());
    for (seed, run) in spec.seeds.iter().zip(runs) {
        let (ts, h) = run.map_err(|e| Error::domain(format!("ensemble member with seed {seed} failed: {e}")))?;
        if t.is_empty() {
            t = ts;
        }
        paths.push(h);
    }
    let (records, m) = (t.len(), dataset.len());
    let mut stats = EnsembleStats {
        seeds: spec.seeds.clone(),
        t,
        mean: vec![vec![0.0; m]; records],
        var: vec![vec![0.0; m]; records],
        se_mean: vec![vec![0.0; m]; records],
        se_var: vec![vec![0.0; m]; records],
        mark_times: Vec::new(),
        samples: Vec::new(),
        paths,
    };
    for i in 0..records {
        for x in 0..m {
            let col = stats.column(i, x);
            stats.mean[i][x] = mean(&col);
            stats.var[i][x] = variance(&col);
            stats.se_mean[i][x] = se_mean(&col);
            stats.se_var[i][x] = jackknife_se_variance(&col);
        }
    }
    for &mark in &spec.marks {
        let i = stats.record_at(mark);
        stats.mark_times.push(stats.t[i]);
        stats.samples.push(stats.paths.iter().map(|p| p[i].clone()).collect());
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_dataset;
    use crate::limit_ode::Grid;
    use crate::model::ScalingConfig;

    fn spec(seeds: usize) -> (EnsembleSpec, Dataset) {
        let ds = synth_dataset(3, 2, 1).unwrap();
        let cfg = TrainConfig::new(ScalingConfig::two_layer(4, 64, 1.0, 0.8).unwrap(), 0.5, 0).unwrap();
        (EnsembleSpec::new(cfg, InitLaw::rademacher(4, 2, 3), 10, seeds).with_marks(vec![0.0, 0.5]), ds)
    }

    #[test]
    fn rejects_small_or_repeated_seed_lists() {
        let (mut s, ds) = spec(1);
        assert!(mc_ensemble(&s, &ds).is_err());
        s.seeds = vec![4, 4];
        assert!(mc_ensemble(&s, &ds).is_err());
    }

    #[test]
    fn statistics_match_direct_computation_and_are_deterministic() {
        let (s, ds) = spec(6);
        let a = mc_ensemble(&s, &ds).unwrap();
        let b = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| mc_ensemble(&s, &ds).unwrap());
        assert_eq!(a, b);
        let i = a.t.len() - 1;
        let col = a.column(i, 1);
        assert_eq!(a.mean[i][1], mean(&col));
        assert_eq!(a.var[i][1], variance(&col));
        assert_eq!(a.mark_times, vec![0.0, 0.5]);
        assert_eq!(a.samples[1][2], a.paths[2][i]);
        assert!(a.var[i][1] > 0.0);
    }

    #[test]
    fn zero_law_on_one_point_has_zero_variance() {
        let ds = Dataset::regression(vec![vec![1.0, 0.0]], vec![0.5], "one").unwrap();
        let cfg = TrainConfig::new(ScalingConfig::two_layer(2, 16, 1.0, 0.7).unwrap(), 1.0, 0).unwrap();
        let s = EnsembleSpec::new(cfg, InitLaw::zero(2, 2), 0, 4);
        let st = mc_ensemble(&s, &ds).unwrap();
        assert!(st.var.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn horizon_zero_gives_initial_outputs() {
        let (mut s, ds) = spec(3);
        s.config.horizon = 0.0;
        let st = mc_ensemble(&s, &ds).unwrap();
        assert_eq!(st.t, vec![0.0]);
        let full = mc_ensemble(&spec(3).0, &ds).unwrap();
        assert_eq!(st.paths[1][0], full.paths[1][0]);
    }

    #[test]
    fn refuses_parallel_inputs() {
        let (s, _) = spec(2);
        let ds = Dataset::regression(vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![0.0, 1.0]], vec![0.0; 3], "bad").unwrap();
        assert!(mc_ensemble(&s, &ds).is_err());
    }

    #[test]
    fn interpolation_and_deviation() {
        let grid = Grid::new(1.0, 0.5).unwrap();
        let path = OdeState { grid, values: vec![vec![0.0], vec![1.0], vec![3.0]] };
        assert_eq!(interpolate(&path, 0.25), vec![0.5]);
        assert_eq!(interpolate(&path, 1.0), vec![3.0]);
        let mut st = mc_ensemble(&spec(2).0, &spec(2).1).unwrap();
        st.t = vec![0.0, 0.75];
        st.paths = vec![vec![vec![0.0], vec![3.0]], vec![vec![1.0], vec![2.0]]];
        let (m, _) = st.mean_sup_deviation(&path).unwrap();
        assert!((m - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scaling_csv_header() {
        let mut buf = Vec::new();
        write_scaling_csv(&mut buf, &[ScalingRow { n2: 4, gamma2: 0.8, t: 0.5, mean: 1.0, var: 2.0, se: 0.1 }]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "n2,gamma2,t,mean,var,se\n4,0.8,0.5,1,2,0.1\n");
    }
}
