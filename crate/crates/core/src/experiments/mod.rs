//! Datasets, Monte Carlo ensembles, scaling-law statistics and metric files.

mod classify;
mod config;
mod ensemble;
mod mnist;
mod stats;

pub use crate::data::synth_dataset;
pub use classify::{accuracy_eval, accuracy_sweep, argmax, classifier_law, train_epochs, write_accuracy_csv, EpochRecord, SweepSpec, CLASSES};
pub use config::{Config, DEFAULTS};
pub use ensemble::{interpolate, mc_ensemble, write_scaling_csv, EnsembleSpec, EnsembleStats, ScalingRow};
pub use mnist::{load_mnist, parse_idx_images, parse_idx_labels, IdxImages, IMAGE_MAGIC, LABEL_MAGIC};
pub use stats::{
    jackknife_se_variance, kolmogorov_survival, mean, normality_check, scaling_fit, se_mean, variance, write_fit_csv, KsReport, ScalingFitReport,
    KS_MIN_SAMPLES,
};
