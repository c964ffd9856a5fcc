//! Synthetic problems, evaluation metrics and the batch benchmark runner.

mod bench;
mod generate;
mod metrics;

pub use bench::{
    run_benchmark, run_trial, write_results, BenchConfig, BenchResults, ParamSweep, SolverKind,
    SummaryRecord, TrialRecord,
};
pub use generate::{generate_instance, GenParams, ProblemInstance};
pub use metrics::{exact_recovery, metrics, Metrics};
