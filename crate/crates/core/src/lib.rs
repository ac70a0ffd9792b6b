//! Normalization-scaled feed-forward networks trained by SGD, their limit ODEs
//! and the asymptotic expansion of the network output in the hidden width.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: parameters, initialization and forward passes;
//! - [`rates`]: layer-wise learning-rate schedules;
//! - [`trainer`]: SGD recursions, trajectories and the one-step decomposition;
//! - [`kernels`]: symbolic test functions, expectations against the limit
//!   initialization law and the kernel tables;
//! - [`limit_ode`]: the limit, fluctuation and expansion systems;
//! - [`experiments`]: datasets, Monte Carlo ensembles and statistics.

#![allow(clippy::needless_range_loop)]

pub mod activation;
pub mod data;
pub mod error;
pub mod experiments;
pub mod kernels;
pub mod law;
pub mod limit_ode;
pub mod model;
pub mod rates;
pub mod rng;
pub mod trainer;

pub use activation::Activation;
pub use data::{Dataset, Targets};
pub use error::{Error, Result};
pub use law::{InitLaw, ScalarLaw};
pub use model::{forward, forward_batch, init_params, ForwardTrace, ScalingConfig, Theta};
pub use rates::{rates_for, rates_general, rates_three_layer, rates_two_layer, RateSchedule};
