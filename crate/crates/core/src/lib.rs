//! Entrywise matrix completion under non-uniform, monotone sampling.
//!
//! For each target entry a square-ish submatrix is chosen that trades size
//! against its smallest sampling probability; the target is then estimated by
//! rank-r singular value truncation of the rescaled submatrix alone.

pub mod bounds;
pub mod error;
pub mod estimator;
pub mod grid_io;
pub mod harness;
pub mod sampling;
pub mod selector;
pub mod signal;

pub use error::{Error, Result};
pub use estimator::{estimate_all, estimate_entry, svt_whole, truncated_svd, Estimate};
pub use harness::{run_experiment, run_trial, ExperimentConfig, ExperimentReport};
pub use sampling::{Mask, ProbabilityDescriptor, ProbabilityMatrix};
pub use selector::{istar, kstar, plan_all, PlanSet, SubmatrixPlan};
