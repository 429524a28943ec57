//! Experiment orchestration, persistence and the CLI runners.

mod config;
mod report;
mod runners;

pub use config::{ExperimentConfig, ModelSection};
pub use report::{write_csv, write_jsonl, write_records, ReportRecord, MODULE_VERSION};
pub use runners::{persist, random_measure_pairs, require, LabContext, SuiteOutcome};
