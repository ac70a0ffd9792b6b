//! The limit initialization measure and everything integrated against it.

pub mod expect;
pub mod functions;
pub mod tables;
pub mod testfn;

pub use expect::{expect, expect_many, mean, Estimate, Method};
pub use functions::{operator_c, KernelContext, KernelSpec};
pub use tables::{assemble_a, gaussian_covariance, kernel_b, lambda_sq, min_eigenvalue, sample_gaussian, KernelTables};
pub use testfn::{Tape, TestFunction, Var, MAX_DERIVATIVE_ORDER};
