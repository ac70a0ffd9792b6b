//! Digit classification: accuracy, epoch training and sweep metrics.

use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::law::{InitLaw, ScalarLaw};
use crate::model::{forward, init_params, ScalingConfig, Theta};
use crate::rng::{self, streams};
use crate::trainer::{Loss, Stepper, Target, TrainConfig};

pub const CLASSES: usize = 10;

/// Index of the largest score, the lowest index among ties.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

/// Fraction of points whose argmax class equals the label.
pub fn accuracy_eval(theta: &Theta, scaling: &ScalingConfig, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::domain("accuracy of an empty test set"));
    }
    let labels = dataset.labels()?;
    let mut hits = 0usize;
    for (x, &l) in dataset.xs.iter().zip(labels) {
        if argmax(&forward(scaling, theta, x)?.g) == l as usize {
            hits += 1;
        }
    }
    Ok(hits as f64 / dataset.len() as f64)
}

/// Rademacher C and W^k with first-layer atoms uniform and scaled to variance 1/d per entry.
pub fn classifier_law(n1: usize, d: usize, seed: u64) -> InitLaw {
    let mut law = InitLaw::rademacher(n1, d, seed);
    let scale = (3.0 / d as f64).sqrt();
    for v in law.w1_atoms.iter_mut().flatten() {
        *v *= scale;
    }
    law.c = ScalarLaw::rademacher();
    law
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub gammas: Vec<f64>,
    pub train_acc: f64,
    pub test_acc: f64,
}

/// Shuffled mini-batch epochs with cross-entropy loss; accuracy is recorded after each epoch.
/// The shuffle comes from the shuffle stream of `config.seed`; the final batch of an epoch may be short.
pub fn train_epochs(config: &TrainConfig, train: &Dataset, test: &Dataset, theta: &mut Theta, epochs: usize) -> Result<Vec<EpochRecord>> {
    if config.loss != Loss::CrossEntropy || config.scaling.outputs != CLASSES {
        return Err(Error::domain("classification training needs cross-entropy loss and ten outputs"));
    }
    if config.batch == 0 {
        return Err(Error::domain("batch size must be positive"));
    }
    if train.is_empty() {
        return Err(Error::domain("training set is empty"));
    }
    theta.check_shape(&config.scaling)?;
    let labels = train.labels()?;
    let mut stepper = Stepper::new(&config.scaling, &config.rates, Loss::CrossEntropy);
    let mut rng = rng::stream(config.seed, streams::SHUFFLE);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut k = 0;
    let mut out = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch) {
            k += 1;
            let batch: Vec<(&[f64], Target)> = chunk.iter().map(|&i| (train.xs[i].as_slice(), Target::Class(labels[i] as usize))).collect();
            stepper.step(theta, &batch, k)?;
        }
        out.push(EpochRecord {
            epoch,
            gammas: config.scaling.gammas.clone(),
            train_acc: accuracy_eval(theta, &config.scaling, train)?,
            test_acc: accuracy_eval(theta, &config.scaling, test)?,
        });
    }
    Ok(out)
}

/// Shared settings of an accuracy sweep; each grid point is trained once per seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Hidden widths, one per layer.
    pub widths: Vec<usize>,
    pub batch: usize,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    /// Seed of the first-layer atoms, shared by every run.
    pub law_seed: u64,
}

/// Per-epoch accuracies at one γ point, averaged over the seeds (run in parallel, reduced in seed order).
pub fn accuracy_sweep(train: &Dataset, test: &Dataset, spec: &SweepSpec, gammas: &[f64]) -> Result<Vec<EpochRecord>> {
    if spec.seeds.is_empty() {
        return Err(Error::domain("an accuracy sweep needs at least one seed"));
    }
    let scaling = ScalingConfig::new(spec.widths.clone(), gammas.to_vec())?.with_outputs(CLASSES)?;
    let law = classifier_law(spec.widths[0], train.dim(), spec.law_seed);
    let runs: Vec<Result<Vec<EpochRecord>>> = spec
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut cfg = TrainConfig::new(scaling.clone(), 1.0, seed)?;
            cfg.loss = Loss::CrossEntropy;
            cfg.batch = spec.batch;
            let mut theta = init_params(&scaling, &law, seed)?;
            train_epochs(&cfg, train, test, &mut theta, spec.epochs)
        })
        .collect();
    let mut mean: Vec<EpochRecord> = Vec::new();
    for (seed, run) in spec.seeds.iter().zip(runs) {
        let run = run.map_err(|e| Error::domain(format!("sweep run with seed {seed} failed: {e}")))?;
        if mean.is_empty() {
            mean = run.iter().map(|r| EpochRecord { train_acc: 0.0, test_acc: 0.0, ..r.clone() }).collect();
        }
        for (m, r) in mean.iter_mut().zip(&run) {
            m.train_acc += r.train_acc;
            m.test_acc += r.test_acc;
        }
    }
    let n = spec.seeds.len() as f64;
    for m in &mut mean {
        m.train_acc /= n;
        m.test_acc /= n;
    }
    Ok(mean)
}

/// CSV `epoch,gamma1,gamma2[,gamma3],train_acc,test_acc`; the depth comes from the first record.
pub fn write_accuracy_csv<W: Write>(out: W, records: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let depth = records.first().map_or(2, |r| r.gammas.len());
    let mut header = vec!["epoch".to_string()];
    header.extend((1..=depth).map(|k| format!("gamma{k}")));
    header.extend(["train_acc".to_string(), "test_acc".to_string()]);
    w.write_record(&header)?;
    for r in records {
        if r.gammas.len() != depth {
            return Err(Error::shape("accuracy records of mixed depth"));
        }
        let mut row = vec![r.epoch.to_string()];
        row.extend(r.gammas.iter().map(f64::to_string));
        row.extend([r.train_acc.to_string(), r.test_acc.to_string()]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
