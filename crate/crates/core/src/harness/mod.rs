//! Experiment driver: labeled telemetry scenarios, the detection study with
//! its ROC, and the READ/WRITE throughput benchmark.

mod bench;
mod report;
mod scenario;
mod study;

pub use bench::{parse_workloads, run_benchmark, BenchmarkConfig, BenchmarkReport, BenchmarkRow, CostModel, Op};
pub use report::{emit, to_gnuplot, write_benchmark_csv, write_roc_csv, write_study_csv, write_sweep_csv};
pub use scenario::{generate_scenario, Band, Case, LabeledFrame, Scenario, ScenarioConfig};
pub use study::{
    accuracy_sweep, roc_curve, run_detection_study, trapezoid_auc, CaseResult, Confusion, RocCurve, RocPoint,
    Score, StudyReport, SweepRow, ROC_CUTOFFS,
};

use crate::detection::DetectionError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}
