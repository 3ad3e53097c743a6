//! Reference computations used to check the learning pipeline.
//!
//! Nothing here depends on the `hmgrl` crate: every routine works on plain
//! slices and nested vectors, so a bug in the pipeline's kernels cannot leak
//! into the values it is checked against. None of these routines sit on a
//! training path.

// Dense index loops mirror the formulas they check.
#![allow(clippy::needless_range_loop)]

pub mod fd;
pub mod metrics;
pub mod ncut;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("function is not finite at coordinate {coord} (value {value})")]
    NonFinite { coord: usize, value: f64 },
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("invalid partition: {0}")]
    Partition(String),
}

pub use fd::{compare_gradients, finite_difference_grad, sample_coords, FdConfig, GradComparison};
pub use metrics::{auc_pairwise, aupr_threshold_enumeration, metric_oracle};
pub use ncut::{
    all_partitions, jacobi_eigen, ncut_objective, ncut_trace_form, power_iteration_radius,
    spectral_cluster_oracle, SpectralResult,
};
