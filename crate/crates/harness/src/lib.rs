//! Benchmark harness for contrastive MI estimators: Gaussian and discrete
//! sources with known MI, training loops, the estimator taxonomy, reports,
//! suites and the exact-oracle report.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
mod error;
pub mod gradcheck;
pub mod oracle_report;
pub mod report;
pub mod run;
pub mod suite;

/// Training allocates and frees multi-megabyte tape buffers every step; the
/// system allocator returns them to the kernel each time.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

pub use config::{BenchmarkConfig, DataKind, SuiteConfig, SuiteObjective};
pub use error::{HarnessError, Result};
pub use report::{EstimateReport, TrajectoryPoint};
pub use run::run_benchmark;
pub use suite::{run_suite, SuiteResult};
