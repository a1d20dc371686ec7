//! Workload driver for the multi-version hash table: seeded workloads,
//! per-policy reports, stop-the-world audits and history capture.

pub mod report;
pub mod run;
pub mod workload;

use std::time::Duration;

use thiserror::Error;

pub use report::{aggregate, report, report_aggregates, Aggregate, Format, MeanStd, RunReport};
pub use run::{
    run, run_detailed, run_with_watchdog, sweep_k, watchdog_from_env, AuditStats, RunOptions, RunOutcome,
};
pub use workload::{Mix, WorkloadSpec, W1, W2, W3};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid workload: {0}")]
    InvalidSpec(String),
    #[error("run did not finish within {0:?}")]
    Timeout(Duration),
    #[error("a worker thread panicked")]
    WorkerPanicked,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
